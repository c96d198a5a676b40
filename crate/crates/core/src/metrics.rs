//! Evaluation metrics: geometric fidelity on spheres (radial error),
//! agreement of Langevin endpoints with the target law (endpoint statistic,
//! its density, KS distance), and latent-sheet diagnostics for the swiss
//! roll (nearest-neighbor distance, maximal latent jump, spread, mean
//! squared displacement).
//!
//! The endpoint statistic of a path ending at `Y` is `t = mu . Y/|Y|`. When
//! the target is a von Mises-Fisher law with mode `mu` and concentration
//! `kappa` on the unit sphere in `R^d`, the statistic has density
//!
//! ```text
//! p(t) = e^{kappa t} (1 - t^2)^{(d-3)/2} / Z(d, kappa),   t in (-1, 1)
//! ```
//!
//! The normalizer is computed by adaptive quadrature after substituting
//! `t = sin(theta)`, which removes the endpoint singularity at `d = 2` and
//! avoids Bessel functions entirely.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Mutex, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifolds::{ManifoldSpec, PointCloud};
use crate::neighbors::SpatialIndex;
use crate::sde::Trajectory;
use crate::util::{dist, mean_sd, norm};

/// Flat evaluation summary. Metrics that do not apply to a run are `None`
/// and serialize as `null`, never as zero.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_radial_err: Option<f64>,
    pub max_radial_err: Option<f64>,
    pub ks_statistic: Option<f64>,
    pub avg_nn_dist_mean: Option<f64>,
    pub avg_nn_dist_sd: Option<f64>,
    pub max_latent_jump: Option<f64>,
    pub spread: Option<f64>,
    pub msd_mean: Option<f64>,
    pub msd_se: Option<f64>,
    /// Conventions behind the reported numbers, spelled out because several
    /// reductions (spread scalarization, jump metric) admit variants.
    pub notes: Option<String>,
}

/// Per-state distance from the sphere of radius `r`.
pub fn radial_error(traj: &Trajectory, r: f64) -> Vec<f64> {
    (0..traj.n_states())
        .map(|l| (norm(traj.state(l)) - r).abs())
        .collect()
}

/// Projection of each path's endpoint onto the unit sphere, dotted with the
/// mode direction.
pub fn endpoint_statistic(trajs: &[Trajectory], mu: &[f64]) -> Result<Vec<f64>> {
    let mu_norm = norm(mu);
    if (mu_norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "mode direction must be a unit vector, |mu| = {mu_norm}"
        )));
    }
    trajs
        .iter()
        .map(|traj| {
            let end = traj.endpoint();
            if end.len() != mu.len() {
                return Err(Error::InvalidParameter(format!(
                    "endpoint has dimension {}, mode has {}",
                    end.len(),
                    mu.len()
                )));
            }
            let n = norm(end);
            if n == 0.0 {
                return Err(Error::OutOfDomain(
                    "endpoint at the origin has no direction".into(),
                ));
            }
            Ok(end.iter().zip(mu).map(|(e, m)| e * m).sum::<f64>() / n)
        })
        .collect()
}

fn check_vmf_params(d: usize, kappa: f64) -> Result<()> {
    if d < 2 {
        return Err(Error::InvalidParameter(format!(
            "the statistic law needs ambient dimension >= 2, got {d}"
        )));
    }
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "concentration must be positive and finite, got {kappa}"
        )));
    }
    Ok(())
}

fn simpson_recurse(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

fn adaptive_simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_recurse(&f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Unnormalized statistic density after the `t = sin(theta)` substitution:
/// smooth on [-pi/2, pi/2] for every d >= 2.
fn vmf_theta_integrand(d: usize, kappa: f64, theta: f64) -> f64 {
    (kappa * theta.sin()).exp() * theta.cos().powi(d as i32 - 2)
}

/// Normalizer `Z(d, kappa)`, memoized: evaluating the density on a fine
/// grid must not redo the quadrature per point. The cached value does not
/// depend on call order.
fn vmf_normalizer(d: usize, kappa: f64) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<(usize, u64), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&z) = cache.lock().unwrap().get(&(d, kappa.to_bits())) {
        return z;
    }
    let z = adaptive_simpson(
        |theta| vmf_theta_integrand(d, kappa, theta),
        -std::f64::consts::FRAC_PI_2,
        std::f64::consts::FRAC_PI_2,
        1e-12 * kappa.exp(),
    );
    cache.lock().unwrap().insert((d, kappa.to_bits()), z);
    z
}

/// Density of the endpoint statistic under a von Mises-Fisher target with
/// concentration `kappa` on the unit sphere of `R^d`.
pub fn vmf_statistic_density(d: usize, kappa: f64, t: f64) -> Result<f64> {
    check_vmf_params(d, kappa)?;
    if t.abs() >= 1.0 {
        if d == 2 {
            return Err(Error::OutOfDomain(format!(
                "density at t = {t} diverges in ambient dimension 2"
            )));
        }
        return Ok(0.0);
    }
    let z = vmf_normalizer(d, kappa);
    Ok((kappa * t).exp() * (1.0 - t * t).powf((d as f64 - 3.0) / 2.0) / z)
}

/// Cumulative distribution of the endpoint statistic.
pub fn vmf_statistic_cdf(d: usize, kappa: f64, t: f64) -> Result<f64> {
    check_vmf_params(d, kappa)?;
    if t <= -1.0 {
        return Ok(0.0);
    }
    if t >= 1.0 {
        return Ok(1.0);
    }
    let z = vmf_normalizer(d, kappa);
    let partial = adaptive_simpson(
        |theta| vmf_theta_integrand(d, kappa, theta),
        -std::f64::consts::FRAC_PI_2,
        t.asin(),
        1e-12 * kappa.exp(),
    );
    Ok((partial / z).clamp(0.0, 1.0))
}

/// Largest gap between the empirical distribution and `cdf`, evaluated at
/// the sample points: `max_x |#{samples <= x}/n - cdf(x)|`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::DegenerateInput("no samples".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("samples are not finite".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut worst = 0.0f64;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let empirical = j as f64 / n;
        let gap = (empirical - cdf(sorted[i])).abs();
        worst = worst.max(gap);
        i = j;
    }
    Ok(worst)
}

/// One exported histogram bin.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramRow {
    pub left: f64,
    pub right: f64,
    pub count: usize,
    pub target_density: f64,
}

/// Equal-width histogram of `samples` on [lo, hi] with the target density
/// evaluated at bin midpoints. Samples outside the range are dropped; the
/// last bin includes its right edge.
pub fn histogram(
    samples: &[f64],
    n_bins: usize,
    lo: f64,
    hi: f64,
    target: impl Fn(f64) -> Result<f64>,
) -> Result<Vec<HistogramRow>> {
    if n_bins == 0 {
        return Err(Error::InvalidParameter("histogram needs bins".into()));
    }
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!(
            "empty histogram range [{lo}, {hi}]"
        )));
    }
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for &s in samples {
        if s < lo || s > hi {
            continue;
        }
        let k = (((s - lo) / width) as usize).min(n_bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| {
            let left = lo + k as f64 * width;
            let right = lo + (k + 1) as f64 * width;
            Ok(HistogramRow {
                left,
                right,
                count,
                target_density: target(0.5 * (left + right))?,
            })
        })
        .collect()
}

/// Latent-sheet diagnostics for an ensemble simulated over a swiss-roll
/// cloud. States are assigned the exact latent coordinates of their nearest
/// cloud point; see the report's `notes` for the conventions.
pub fn swiss_roll_report(trajs: &[Trajectory], cloud: &PointCloud) -> Result<EvalReport> {
    match cloud.spec {
        Some(ManifoldSpec::SwissRoll { .. }) => {}
        _ => {
            return Err(Error::InvalidParameter(
                "latent diagnostics need a swiss-roll cloud".into(),
            ))
        }
    }
    let latent = cloud.latent.as_ref().ok_or_else(|| {
        Error::InvalidParameter("latent diagnostics need stored latent coordinates".into())
    })?;
    if trajs.is_empty() {
        return Err(Error::DegenerateInput("no trajectories".into()));
    }
    let index = SpatialIndex::new(&cloud.points)?;

    struct PathStats {
        nn_mean: f64,
        max_jump: f64,
        latent_start: [f64; 2],
        latent_end: [f64; 2],
    }

    let per_path: Vec<Result<PathStats>> = trajs
        .par_iter()
        .map(|traj| {
            let mut nn_sum = 0.0;
            let mut max_jump = 0.0f64;
            let mut prev: Option<[f64; 2]> = None;
            let mut first = [0.0; 2];
            let mut last = [0.0; 2];
            for l in 0..traj.n_states() {
                let (node, d) = index.knn(traj.state(l), 1)?[0];
                nn_sum += d;
                let lat = [latent[[node, 0]], latent[[node, 1]]];
                if let Some(p) = prev {
                    max_jump = max_jump.max(dist(&p, &lat));
                } else {
                    first = lat;
                }
                last = lat;
                prev = Some(lat);
            }
            Ok(PathStats {
                nn_mean: nn_sum / traj.n_states() as f64,
                max_jump,
                latent_start: first,
                latent_end: last,
            })
        })
        .collect();
    let per_path = per_path.into_iter().collect::<Result<Vec<_>>>()?;

    let nn_means: Vec<f64> = per_path.iter().map(|p| p.nn_mean).collect();
    let (nn_mean, nn_sd) = mean_sd(&nn_means);
    let max_jump = per_path.iter().map(|p| p.max_jump).fold(0.0, f64::max);

    // Spread: trace of the sample covariance of endpoint latents.
    let n = per_path.len() as f64;
    let mut mean_end = [0.0; 2];
    for p in &per_path {
        mean_end[0] += p.latent_end[0] / n;
        mean_end[1] += p.latent_end[1] / n;
    }
    let spread = if per_path.len() > 1 {
        per_path
            .iter()
            .map(|p| {
                let dt = p.latent_end[0] - mean_end[0];
                let dh = p.latent_end[1] - mean_end[1];
                dt * dt + dh * dh
            })
            .sum::<f64>()
            / (n - 1.0)
    } else {
        0.0
    };

    // MSD with a standard error over distinct starting states (grouped by
    // the exact bit pattern of the first recorded state).
    let mut by_start: BTreeMap<Vec<u64>, Vec<f64>> = BTreeMap::new();
    for (traj, p) in trajs.iter().zip(&per_path) {
        let key: Vec<u64> = traj.state(0).iter().map(|v| v.to_bits()).collect();
        let sq = dist(&p.latent_start, &p.latent_end).powi(2);
        by_start.entry(key).or_default().push(sq);
    }
    let msd_mean = per_path
        .iter()
        .map(|p| dist(&p.latent_start, &p.latent_end).powi(2))
        .sum::<f64>()
        / n;
    let start_means: Vec<f64> = by_start
        .values()
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
        .collect();
    let (_, start_sd) = mean_sd(&start_means);
    let msd_se = start_sd / (start_means.len() as f64).sqrt();

    Ok(EvalReport {
        avg_nn_dist_mean: Some(nn_mean),
        avg_nn_dist_sd: Some(nn_sd),
        max_latent_jump: Some(max_jump),
        spread: Some(spread),
        msd_mean: Some(msd_mean),
        msd_se: Some(msd_se),
        notes: Some(
            "states take the latent coordinates of their nearest cloud point; \
             spread is the trace of the latent endpoint covariance; the jump \
             metric is the largest consecutive latent distance"
                .into(),
        ),
        ..EvalReport::default()
    })
}
