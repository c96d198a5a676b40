//! CSV and JSON persistence for clouds, operator fields, trajectories,
//! histograms, and evaluation reports.
//!
//! All floating-point values are written with 17 significant digits
//! (`{:.16e}`), which round-trips every finite f64 exactly. Parse failures
//! carry the file path and 1-based line number.
//!
//! Point-cloud files may begin with a comment line of space-separated
//! `key=value` pairs (`# manifold=sphere dim=2 radius=... intrinsic_dim=2`)
//! recording the manifold the cloud was sampled from; without it a loaded
//! cloud has no manifold tag and its intrinsic dimension defaults to the
//! ambient one.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::manifolds::{ManifoldSpec, PointCloud};
use crate::metrics::{EvalReport, HistogramRow};
use crate::operator::OperatorField;
use crate::sde::Trajectory;

pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_f64(cell: &str, path: &Path, line: usize) -> Result<f64> {
    cell.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(path, line, format!("not a number: {cell:?}")))
}

fn parse_usize(cell: &str, path: &Path, line: usize) -> Result<usize> {
    cell.trim()
        .parse::<usize>()
        .map_err(|_| parse_err(path, line, format!("not an index: {cell:?}")))
}

struct Csv {
    path: PathBuf,
    /// `key=value` pairs from a leading `#` line, if any.
    metadata: Vec<(String, String)>,
    header: Vec<String>,
    header_line: usize,
    /// (1-based line number, cells)
    rows: Vec<(usize, Vec<String>)>,
}

fn read_csv(path: &Path) -> Result<Csv> {
    let text = fs::read_to_string(path)?;
    let mut metadata = Vec::new();
    let mut header: Option<(usize, Vec<String>)> = None;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if header.is_some() || !metadata.is_empty() {
                return Err(parse_err(
                    path,
                    line_no,
                    "comment lines are only allowed before the header",
                ));
            }
            for pair in rest.split_whitespace() {
                let (k, v) = pair.split_once('=').ok_or_else(|| {
                    parse_err(path, line_no, format!("expected key=value, got {pair:?}"))
                })?;
                metadata.push((k.to_string(), v.to_string()));
            }
            continue;
        }
        let cells: Vec<String> = line.split(',').map(|c| c.trim().to_string()).collect();
        match &header {
            None => header = Some((line_no, cells)),
            Some((_, h)) => {
                if cells.len() != h.len() {
                    return Err(parse_err(
                        path,
                        line_no,
                        format!("expected {} columns, found {}", h.len(), cells.len()),
                    ));
                }
                rows.push((line_no, cells));
            }
        }
    }
    let (header_line, header) =
        header.ok_or_else(|| parse_err(path, 1, "file has no header line"))?;
    Ok(Csv {
        path: path.to_path_buf(),
        metadata,
        header,
        header_line,
        rows,
    })
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Expects `names` = the exact header prefix `x1..xn`; returns n given the
/// optional latent suffix.
fn count_coordinate_columns(header: &[String]) -> usize {
    header
        .iter()
        .take_while(|name| name.starts_with('x'))
        .count()
}

pub fn save_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let mut meta = String::from("#");
    match &cloud.spec {
        Some(ManifoldSpec::Sphere { dim, radius }) => {
            write!(meta, " manifold=sphere dim={dim} radius={}", fmt_f64(*radius)).unwrap();
        }
        Some(ManifoldSpec::Torus { major, minor }) => {
            write!(
                meta,
                " manifold=torus major={} minor={}",
                fmt_f64(*major),
                fmt_f64(*minor)
            )
            .unwrap();
        }
        Some(ManifoldSpec::SwissRoll {
            t_min,
            t_max,
            height,
        }) => {
            write!(
                meta,
                " manifold=swiss-roll t_min={} t_max={} height={}",
                fmt_f64(*t_min),
                fmt_f64(*t_max),
                fmt_f64(*height)
            )
            .unwrap();
        }
        None => {}
    }
    write!(meta, " intrinsic_dim={}", cloud.intrinsic_dim).unwrap();
    writeln!(out, "{meta}")?;

    let ambient = cloud.ambient_dim();
    let mut header: Vec<String> = (1..=ambient).map(|k| format!("x{k}")).collect();
    if let Some(latent) = &cloud.latent {
        header.extend((1..=latent.ncols()).map(|k| format!("lat{k}")));
    }
    writeln!(out, "{}", header.join(","))?;
    for i in 0..cloud.n_points() {
        let mut row: Vec<String> = cloud.point(i).iter().map(|&v| fmt_f64(v)).collect();
        if let Some(latent) = &cloud.latent {
            row.extend(latent.row(i).iter().map(|&v| fmt_f64(v)));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_cloud(path: &Path) -> Result<PointCloud> {
    let csv = read_csv(path)?;
    let ambient = count_coordinate_columns(&csv.header);
    if ambient == 0 {
        return Err(parse_err(
            &csv.path,
            csv.header_line,
            "header has no coordinate columns",
        ));
    }
    let n_latent = csv.header.len() - ambient;
    if n_latent > 2 {
        return Err(parse_err(
            &csv.path,
            csv.header_line,
            format!("{n_latent} latent columns, at most 2 supported"),
        ));
    }
    if csv.rows.is_empty() {
        return Err(parse_err(&csv.path, csv.header_line, "cloud has no points"));
    }

    let mut meta_intrinsic = None;
    let mut spec_kind = None;
    let mut params: std::collections::HashMap<String, f64> = std::collections::HashMap::new();
    let mut dim_param = None;
    for (k, v) in &csv.metadata {
        match k.as_str() {
            "manifold" => spec_kind = Some(v.clone()),
            "intrinsic_dim" => meta_intrinsic = Some(parse_usize(v, &csv.path, 1)?),
            "dim" => dim_param = Some(parse_usize(v, &csv.path, 1)?),
            "radius" | "major" | "minor" | "t_min" | "t_max" | "height" => {
                params.insert(k.clone(), parse_f64(v, &csv.path, 1)?);
            }
            other => {
                return Err(parse_err(
                    &csv.path,
                    1,
                    format!("unknown metadata key {other:?}"),
                ));
            }
        }
    }
    let get = |key: &str| -> Result<f64> {
        params
            .get(key)
            .copied()
            .ok_or_else(|| parse_err(&csv.path, 1, format!("missing metadata key {key:?}")))
    };
    let spec = match spec_kind.as_deref() {
        None => None,
        Some("sphere") => Some(ManifoldSpec::Sphere {
            dim: dim_param
                .ok_or_else(|| parse_err(&csv.path, 1, "missing metadata key \"dim\""))?,
            radius: get("radius")?,
        }),
        Some("torus") => Some(ManifoldSpec::Torus {
            major: get("major")?,
            minor: get("minor")?,
        }),
        Some("swiss-roll") => Some(ManifoldSpec::SwissRoll {
            t_min: get("t_min")?,
            t_max: get("t_max")?,
            height: get("height")?,
        }),
        Some(other) => {
            return Err(parse_err(
                &csv.path,
                1,
                format!("unknown manifold {other:?}"),
            ));
        }
    };

    let n = csv.rows.len();
    let mut points = Array2::zeros((n, ambient));
    let mut latent = (n_latent > 0).then(|| Array2::zeros((n, n_latent)));
    for (i, (line, cells)) in csv.rows.iter().enumerate() {
        for k in 0..ambient {
            points[[i, k]] = parse_f64(&cells[k], &csv.path, *line)?;
        }
        if let Some(lat) = latent.as_mut() {
            for k in 0..n_latent {
                lat[[i, k]] = parse_f64(&cells[ambient + k], &csv.path, *line)?;
            }
        }
    }
    let cloud = PointCloud {
        points,
        intrinsic_dim: meta_intrinsic.unwrap_or(ambient),
        latent,
        spec,
    };
    cloud.validate()?;
    Ok(cloud)
}

pub fn save_field(field: &OperatorField, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let n = field.ambient_dim();
    let mut header = vec!["node".to_string()];
    header.extend((1..=n).map(|k| format!("v{k}")));
    for r in 1..=n {
        for c in 1..=n {
            header.push(format!("g{r}{c}"));
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for i in 0..field.n_nodes() {
        let mut row = vec![i.to_string()];
        row.extend(field.drift_row(i).iter().map(|&v| fmt_f64(v)));
        let cdc = field.cdc(i);
        for r in 0..n {
            for c in 0..n {
                row.push(fmt_f64(cdc[[r, c]]));
            }
        }
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// Loads an operator field; carre-du-champ square roots are recomputed, so
/// only the drift and matrix entries are stored on disk.
pub fn load_field(path: &Path) -> Result<OperatorField> {
    let csv = read_csv(path)?;
    let cols = csv.header.len();
    // cols = 1 + n + n^2
    let n = (0..=cols)
        .find(|n| 1 + n + n * n == cols)
        .ok_or_else(|| {
            parse_err(
                &csv.path,
                csv.header_line,
                format!("{cols} columns do not fit node,v1..vn,g11..gnn"),
            )
        })?;
    if csv.header.first().map(String::as_str) != Some("node") || n == 0 {
        return Err(parse_err(
            &csv.path,
            csv.header_line,
            "expected header node,v1..vn,g11..gnn",
        ));
    }
    if csv.rows.is_empty() {
        return Err(parse_err(&csv.path, csv.header_line, "field has no nodes"));
    }
    let n_nodes = csv.rows.len();
    let mut drift = Array2::zeros((n_nodes, n));
    let mut cdc = Vec::with_capacity(n_nodes);
    for (i, (line, cells)) in csv.rows.iter().enumerate() {
        let node = parse_usize(&cells[0], &csv.path, *line)?;
        if node != i {
            return Err(parse_err(
                &csv.path,
                *line,
                format!("node ids must be sequential, expected {i}, found {node}"),
            ));
        }
        for k in 0..n {
            drift[[i, k]] = parse_f64(&cells[1 + k], &csv.path, *line)?;
        }
        let mut m = Array2::zeros((n, n));
        for r in 0..n {
            for c in 0..n {
                m[[r, c]] = parse_f64(&cells[1 + n + r * n + c], &csv.path, *line)?;
            }
        }
        cdc.push(m);
    }
    OperatorField::from_parts(drift, cdc)
}

fn trajectory_header(traj: &Trajectory) -> Vec<String> {
    let mut header = vec!["step".to_string(), "t".to_string()];
    header.extend((1..=traj.ambient_dim()).map(|k| format!("x{k}")));
    if traj.radial_err.is_some() {
        header.push("radial_err".to_string());
    }
    if traj.nn_dist.is_some() {
        header.push("nn_dist".to_string());
    }
    header
}

fn trajectory_row(traj: &Trajectory, l: usize) -> Vec<String> {
    let mut row = vec![l.to_string(), fmt_f64(traj.times[l])];
    row.extend(traj.state(l).iter().map(|&v| fmt_f64(v)));
    if let Some(r) = &traj.radial_err {
        row.push(fmt_f64(r[l]));
    }
    if let Some(nn) = &traj.nn_dist {
        row.push(fmt_f64(nn[l]));
    }
    row
}

pub fn save_trajectory(traj: &Trajectory, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{}", trajectory_header(traj).join(","))?;
    for l in 0..traj.n_states() {
        writeln!(out, "{}", trajectory_row(traj, l).join(","))?;
    }
    out.flush()?;
    Ok(())
}

/// All paths in one file, with a leading `path` column.
pub fn save_trajectories_concat(trajs: &[Trajectory], path: &Path) -> Result<()> {
    let first = trajs
        .first()
        .ok_or_else(|| Error::DegenerateInput("no trajectories to save".into()))?;
    let mut out = create(path)?;
    let mut header = vec!["path".to_string()];
    header.extend(trajectory_header(first));
    writeln!(out, "{}", header.join(","))?;
    for (p, traj) in trajs.iter().enumerate() {
        if trajectory_header(traj) != trajectory_header(first) {
            return Err(Error::InvalidParameter(
                "trajectories disagree on recorded columns".into(),
            ));
        }
        for l in 0..traj.n_states() {
            let mut row = vec![p.to_string()];
            row.extend(trajectory_row(traj, l));
            writeln!(out, "{}", row.join(","))?;
        }
    }
    out.flush()?;
    Ok(())
}

struct TrajectoryColumns {
    ambient: usize,
    radial: bool,
    nn: bool,
}

fn trajectory_columns(csv: &Csv, offset: usize) -> Result<TrajectoryColumns> {
    let names = &csv.header[offset..];
    if names.len() < 3 || names[0] != "step" || names[1] != "t" {
        return Err(parse_err(
            &csv.path,
            csv.header_line,
            "expected header step,t,x1..",
        ));
    }
    let ambient = count_coordinate_columns(&names[2..]);
    let mut rest = names[2 + ambient..].iter();
    let mut radial = false;
    let mut nn = false;
    match (rest.next().map(String::as_str), rest.next().map(String::as_str)) {
        (None, _) => {}
        (Some("radial_err"), None) => radial = true,
        (Some("nn_dist"), None) => nn = true,
        (Some("radial_err"), Some("nn_dist")) => {
            radial = true;
            nn = true;
        }
        _ => {
            return Err(parse_err(
                &csv.path,
                csv.header_line,
                "trailing columns must be radial_err and/or nn_dist",
            ));
        }
    }
    if ambient == 0 {
        return Err(parse_err(
            &csv.path,
            csv.header_line,
            "trajectory has no coordinate columns",
        ));
    }
    Ok(TrajectoryColumns { ambient, radial, nn })
}

/// Parses rows `[start, end)` of `csv` (whose trajectory columns begin at
/// `offset`) as one path.
fn parse_trajectory_rows(
    csv: &Csv,
    cols: &TrajectoryColumns,
    offset: usize,
    range: std::ops::Range<usize>,
) -> Result<Trajectory> {
    let n_states = range.len();
    let mut times = Vec::with_capacity(n_states);
    let mut states = Array2::zeros((n_states, cols.ambient));
    let mut radial = cols.radial.then(|| Vec::with_capacity(n_states));
    let mut nn = cols.nn.then(|| Vec::with_capacity(n_states));
    for (l, row_idx) in range.enumerate() {
        let (line, cells) = &csv.rows[row_idx];
        let cells = &cells[offset..];
        let step = parse_usize(&cells[0], &csv.path, *line)?;
        if step != l {
            return Err(parse_err(
                &csv.path,
                *line,
                format!("steps must be sequential, expected {l}, found {step}"),
            ));
        }
        times.push(parse_f64(&cells[1], &csv.path, *line)?);
        for k in 0..cols.ambient {
            states[[l, k]] = parse_f64(&cells[2 + k], &csv.path, *line)?;
        }
        let mut extra = 2 + cols.ambient;
        if let Some(r) = radial.as_mut() {
            r.push(parse_f64(&cells[extra], &csv.path, *line)?);
            extra += 1;
        }
        if let Some(v) = nn.as_mut() {
            v.push(parse_f64(&cells[extra], &csv.path, *line)?);
        }
    }
    Ok(Trajectory {
        times,
        states,
        radial_err: radial,
        nn_dist: nn,
    })
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let csv = read_csv(path)?;
    if csv.rows.is_empty() {
        return Err(parse_err(
            &csv.path,
            csv.header_line,
            "trajectory has no states",
        ));
    }
    let cols = trajectory_columns(&csv, 0)?;
    parse_trajectory_rows(&csv, &cols, 0, 0..csv.rows.len())
}

pub fn load_trajectories_concat(path: &Path) -> Result<Vec<Trajectory>> {
    let csv = read_csv(path)?;
    if csv.header.first().map(String::as_str) != Some("path") {
        return Err(parse_err(
            &csv.path,
            csv.header_line,
            "expected header path,step,t,x1..",
        ));
    }
    if csv.rows.is_empty() {
        return Err(parse_err(&csv.path, csv.header_line, "file has no states"));
    }
    let cols = trajectory_columns(&csv, 1)?;
    let mut trajs = Vec::new();
    let mut start = 0;
    while start < csv.rows.len() {
        let (line, cells) = &csv.rows[start];
        let id = parse_usize(&cells[0], &csv.path, *line)?;
        if id != trajs.len() {
            return Err(parse_err(
                &csv.path,
                *line,
                format!("path ids must be sequential, expected {}, found {id}", trajs.len()),
            ));
        }
        let mut end = start + 1;
        while end < csv.rows.len() && csv.rows[end].1[0].trim() == cells[0].trim() {
            end += 1;
        }
        trajs.push(parse_trajectory_rows(&csv, &cols, 1, start..end)?);
        start = end;
    }
    Ok(trajs)
}

pub fn save_histogram(rows: &[HistogramRow], path: &Path) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "bin_left,bin_right,count,target_density")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{}",
            fmt_f64(row.left),
            fmt_f64(row.right),
            row.count,
            fmt_f64(row.target_density)
        )?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_report(report: &EvalReport, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::InvalidParameter(format!("report serialization failed: {e}")))?;
    writeln!(out, "{json}")?;
    out.flush()?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e.to_string()))
}
