//! End-to-end acceptance checks, one test per criterion. Each prints a
//! single PASS/FAIL line (visible with `--nocapture`) before asserting.
//!
//! Heavy fixtures (clouds, operator fields) are built once and shared. The
//! full latent-sheet protocol (50 starts x 100 paths x 10^4 steps) runs for
//! minutes and is `#[ignore]`d; the always-on reduced protocol checks the
//! same thresholds at 5 starts x 10 paths.

use std::sync::OnceLock;

use imd::{
    build_graph, build_operator_field, default_bandwidth, ks_distance, sample_sphere,
    sample_swiss_roll, simulate, simulate_ensemble, swiss_roll_report, vmf_statistic_cdf,
    DriftKind, DriftSpec, DynamicsMode, GraphConfig, IntegratorConfig, OperatorField, PointCloud,
    ScoreConfig, SpatialIndex, Trajectory,
};
use ndarray::arr1;

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "{} criterion {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {criterion}: {detail}");
}

struct Fixture {
    cloud: PointCloud,
    index: SpatialIndex,
    field: OperatorField,
}

fn build_fixture(cloud: PointCloud, bandwidth: f64) -> Fixture {
    let index = SpatialIndex::new(&cloud.points).expect("valid cloud");
    let graph = build_graph(
        &cloud,
        &index,
        GraphConfig::new(bandwidth, cloud.intrinsic_dim),
    )
    .expect("connected graph");
    let field = build_operator_field(&graph);
    Fixture {
        cloud,
        index,
        field,
    }
}

/// Unit two-sphere, 10^4 points. The narrow bandwidth keeps the spurious
/// radial component of the estimated diffusion small (it scales with the
/// bandwidth squared), which sets the radial-error floor of long paths.
fn s2() -> &'static Fixture {
    static S2: OnceLock<Fixture> = OnceLock::new();
    S2.get_or_init(|| build_fixture(sample_sphere(2, 1.0, 10_000, 101).unwrap(), 0.1))
}

/// Unit seven-sphere, 2 x 10^4 points, bandwidth from the connectivity rule.
fn s7() -> &'static Fixture {
    static S7: OnceLock<Fixture> = OnceLock::new();
    S7.get_or_init(|| {
        let cloud = sample_sphere(7, 1.0, 20_000, 202).unwrap();
        let bw = default_bandwidth(&cloud.points).unwrap();
        build_fixture(cloud, bw)
    })
}

/// Swiss roll with sheet extents (height, arc) = (20, 14), 10^4 points.
fn swiss() -> &'static Fixture {
    static SWISS: OnceLock<Fixture> = OnceLock::new();
    SWISS.get_or_init(|| {
        let cloud = sample_swiss_roll(1.5, 15.5, 20.0, 10_000, 303).unwrap();
        let bw = default_bandwidth(&cloud.points).unwrap();
        build_fixture(cloud, bw)
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn max(values: &[f64]) -> f64 {
    values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[test]
fn criterion_01_sphere_paths_stay_radially_faithful() {
    let fix = s2();
    let mut cfg = IntegratorConfig::new(1e-3, 5000);
    cfg.seed = 11;
    let traj = simulate(
        &fix.field,
        &fix.index,
        &fix.cloud,
        &cfg,
        &DriftSpec::none(),
        None,
        None,
    )
    .unwrap();
    let radial = traj.radial_err.as_ref().unwrap();
    let (m, mx) = (mean(radial), max(radial));
    report(
        "01",
        m <= 0.05 && mx <= 0.15,
        &format!("mean radial error {m:.4} (<= 0.05), max {mx:.4} (<= 0.15)"),
    );
}

/// Langevin drift toward the first axis with concentration 10.
fn vmf_spec() -> DriftSpec {
    DriftSpec {
        kind: DriftKind::Vmf {
            mu: arr1(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
            kappa: 10.0,
        },
        beta: 1.0,
    }
}

#[test]
fn criterion_02_stabilization_enables_large_steps_on_s7() {
    let fix = s7();
    let score = ScoreConfig::new(&fix.cloud, None).unwrap();
    let spec = vmf_spec();
    // 2000 Langevin steps at each step size, 8 paths per setting. The step
    // size controls how much off-sphere drift the paths accumulate within
    // the fixed step budget; the stabilized run keeps it near zero.
    // Returns (mean over paths of the per-path mean radial error, max over
    // paths and steps).
    let run = |step: f64, drgd: bool, seed: u64| -> (f64, f64) {
        let mut cfg = IntegratorConfig::new(step, 2000);
        cfg.seed = seed;
        cfg.drgd_enabled = drgd;
        let per_path: Vec<(f64, f64)> = simulate_ensemble(
            &fix.field,
            &fix.index,
            &fix.cloud,
            &cfg,
            &spec,
            drgd.then_some(&score),
            &[],
            8,
        )
        .unwrap()
        .into_iter()
        .map(|r| {
            let traj = r.unwrap();
            let radial = traj.radial_err.as_ref().unwrap();
            (mean(radial), max(radial))
        })
        .collect();
        let means: Vec<f64> = per_path.iter().map(|p| p.0).collect();
        let maxes: Vec<f64> = per_path.iter().map(|p| p.1).collect();
        (mean(&means), max(&maxes))
    };
    let (m1, _) = run(1e-3, false, 21);
    let (m2, _) = run(1e-4, false, 22);
    let (m3, _) = run(1e-5, false, 23);
    let (m_stab, max_stab) = run(1e-3, true, 24);
    assert!(
        max_stab <= 0.2,
        "stabilized paths left the sphere: max radial error {max_stab:.4}"
    );
    report(
        "02",
        m1 >= 10.0 * m_stab && m1 > m2 && m2 > m3,
        &format!(
            "stabilization shrinks the mean radial error {m1:.4} -> {m_stab:.4} (>= 10x); \
             disabled errors {m1:.4} > {m2:.4} > {m3:.4} fall with the step size"
        ),
    );
}

/// vMF Langevin ensemble to T = 2, returning the KS distance between the
/// endpoint statistics and the stationary law exp(-beta U), a vMF with
/// concentration beta * kappa.
///
/// Stabilization must stay on: the drift couples to the spurious radial
/// part of the estimated diffusion and would otherwise inflate the radius
/// (and with it the effective concentration). A kernel width well below
/// the node spacing keeps the stabilized radius at 1, and a coarse
/// effective step keeps the stabilized chain hopping between nodes fast
/// enough to mix within the fixed horizon.
fn langevin_endpoint_ks(n_paths: usize) -> f64 {
    let fix = s7();
    let score = ScoreConfig::new(&fix.cloud, Some(0.10)).unwrap();
    let spec = vmf_spec();
    let mut cfg = IntegratorConfig::new(0.02, 100);
    cfg.seed = 31;
    cfg.drgd_enabled = true;
    let trajs: Vec<Trajectory> = simulate_ensemble(
        &fix.field,
        &fix.index,
        &fix.cloud,
        &cfg,
        &spec,
        Some(&score),
        &[],
        n_paths,
    )
    .unwrap()
    .into_iter()
    .map(|r| r.unwrap())
    .collect();
    let mu = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
    let stats = imd::endpoint_statistic(&trajs, &mu).unwrap();
    ks_distance(&stats, |t| vmf_statistic_cdf(8, 10.0, t).unwrap()).unwrap()
}

#[test]
fn criterion_03_langevin_endpoints_match_the_target_law() {
    let ks = langevin_endpoint_ks(500);
    report(
        "03 (reduced)",
        ks <= 0.15,
        &format!("KS distance of 500 endpoint statistics {ks:.4} (<= 0.15)"),
    );
}

#[test]
#[ignore = "full 2000-path ensemble; minutes of runtime"]
fn criterion_03_langevin_endpoints_full_ensemble() {
    let ks = langevin_endpoint_ks(2000);
    report(
        "03 (full)",
        ks <= 0.10,
        &format!("KS distance of 2000 endpoint statistics {ks:.4} (<= 0.10)"),
    );
}

fn projector_errors(fix: &Fixture) -> Vec<f64> {
    (0..fix.cloud.n_points())
        .map(|i| {
            let x = fix.cloud.point(i);
            let cdc = fix.field.cdc(i);
            let mut sq = 0.0;
            for r in 0..3 {
                for c in 0..3 {
                    let target = if r == c { 1.0 } else { 0.0 } - x[r] * x[c];
                    sq += (cdc[[r, c]] - target).powi(2);
                }
            }
            sq.sqrt()
        })
        .collect()
}

#[test]
fn criterion_04_cdc_recovers_the_tangent_projector() {
    // Bandwidth trades the O(h^2) curvature bias against neighborhood noise;
    // 0.5 balances them at these sizes. Same seed nests the small cloud in
    // the large one.
    let large = build_fixture(sample_sphere(2, 1.0, 10_000, 101).unwrap(), 0.5);
    let small = build_fixture(sample_sphere(2, 1.0, 1_000, 101).unwrap(), 0.5);
    let errs_large = projector_errors(&large);
    let errs_small = projector_errors(&small);
    let within = errs_large.iter().filter(|&&e| e <= 0.2).count() as f64
        / errs_large.len() as f64;
    let med_small = median(&errs_small);
    let med_large = median(&errs_large);
    report(
        "04",
        within >= 0.95 && med_large < med_small,
        &format!(
            "{:.1}% of nodes within 0.2 of the projector (>= 95%); \
             median error {med_small:.4} -> {med_large:.4} falls with size",
            within * 100.0
        ),
    );
}

#[test]
fn criterion_05_generator_recovers_the_coordinate_drift() {
    // On the unit two-sphere the generator sends each coordinate to its
    // negation; the cap average has no curvature bias there, so a wide
    // bandwidth only suppresses sampling noise.
    let fix = build_fixture(sample_sphere(2, 1.0, 10_000, 101).unwrap(), 0.8);
    let errs: Vec<f64> = (0..fix.cloud.n_points())
        .map(|i| {
            let x = fix.cloud.point(i);
            let v = fix.field.drift_row(i);
            let num: f64 = (0..3).map(|k| (v[k] + x[k]).powi(2)).sum();
            let den: f64 = (0..3).map(|k| x[k] * x[k]).sum();
            (num / den).sqrt()
        })
        .collect();
    let med = median(&errs);
    report(
        "05",
        med <= 0.15,
        &format!("median relative error of the coordinate drift {med:.4} (<= 0.15)"),
    );
}

#[test]
fn criterion_06_cdc_identity_holds_on_random_graphs() {
    use imd::Kernel;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    let mut worst = 0.0f64;
    for case in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(600 + case);
        let n = rng.random_range(5..60);
        let dim = rng.random_range(1..4);
        let points =
            ndarray::Array2::from_shape_fn((n, dim), |_| rng.random::<f64>() * 4.0 - 2.0);
        let cloud = PointCloud {
            points,
            intrinsic_dim: dim,
            latent: None,
            spec: None,
        };
        let index = SpatialIndex::new(&cloud.points).unwrap();
        let bw = default_bandwidth(&cloud.points).unwrap();
        let config = GraphConfig {
            bandwidth: bw,
            kernel: if case % 2 == 0 {
                Kernel::HardCutoff
            } else {
                Kernel::Gaussian
            },
            scaling_c: rng.random::<f64>() * 3.0 + 0.5,
        };
        let graph = build_graph(&cloud, &index, config).unwrap();
        let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let uw: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a * b).collect();
        let g_uw = graph.generator_apply(&uw).unwrap();
        let g_u = graph.generator_apply(&u).unwrap();
        let g_w = graph.generator_apply(&w).unwrap();
        let direct = graph.cdc_apply(&u, &w).unwrap();
        for i in 0..n {
            let expanded = g_uw[i] - u[i] * g_w[i] - w[i] * g_u[i];
            worst = worst.max((expanded - direct[i]).abs());
        }
    }
    report(
        "06",
        worst <= 1e-12,
        &format!("the product-rule expansion matches the closed form to {worst:.2e} (<= 1e-12)"),
    );
}

#[test]
fn criterion_07_dirichlet_form_is_nonnegative_and_kills_constants() {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    let mut worst_negative = 0.0f64;
    let mut worst_constant = 0.0f64;
    for case in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + case);
        let n = rng.random_range(4..50);
        let dim = rng.random_range(1..4);
        let points =
            ndarray::Array2::from_shape_fn((n, dim), |_| rng.random::<f64>() * 4.0 - 2.0);
        let cloud = PointCloud {
            points,
            intrinsic_dim: dim,
            latent: None,
            spec: None,
        };
        let index = SpatialIndex::new(&cloud.points).unwrap();
        let bw = default_bandwidth(&cloud.points).unwrap();
        let graph = build_graph(&cloud, &index, GraphConfig::new(bw, dim)).unwrap();
        let u: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let ones = vec![1.0; n];
        let quad = graph.dirichlet_form(&u, &u).unwrap();
        worst_negative = worst_negative.max(-quad);
        worst_constant = worst_constant.max(graph.dirichlet_form(&ones, &u).unwrap().abs());
    }
    report(
        "07",
        worst_negative <= 0.0 && worst_constant <= 1e-12,
        &format!(
            "energies stayed nonnegative (worst negativity {worst_negative:.2e}) and \
             constants are in the kernel to {worst_constant:.2e} (<= 1e-12)"
        ),
    );
}

struct SheetRun {
    avg_nn: f64,
    max_jump: f64,
}

/// Simulates `n_paths` per start on the swiss roll and reduces the latent
/// diagnostics batch by batch (one batch per start) to bound memory.
fn sheet_protocol(starts: &[usize], n_paths: usize, drgd: bool, seed: u64) -> SheetRun {
    let fix = swiss();
    let score = ScoreConfig::new(&fix.cloud, None).unwrap();
    let mut cfg = IntegratorConfig::new(1e-3, 10_000);
    cfg.speedup = 100.0;
    cfg.drgd_enabled = drgd;
    if !drgd {
        cfg.mode = DynamicsMode::CdcOnly;
    }
    let mut nn_means = Vec::new();
    let mut max_jump = 0.0f64;
    for (s, &start) in starts.iter().enumerate() {
        // Distinct derived seeds per (start, path), independent of batching.
        cfg.seed = seed.wrapping_add(s as u64);
        let x0 = vec![fix.cloud.point(start).to_vec()];
        let trajs: Vec<Trajectory> = simulate_ensemble(
            &fix.field,
            &fix.index,
            &fix.cloud,
            &cfg,
            &DriftSpec::none(),
            drgd.then_some(&score),
            &x0,
            n_paths,
        )
        .unwrap()
        .into_iter()
        .map(|r| r.unwrap())
        .collect();
        let batch = swiss_roll_report(&trajs, &fix.cloud).unwrap();
        nn_means.push(batch.avg_nn_dist_mean.unwrap());
        max_jump = max_jump.max(batch.max_latent_jump.unwrap());
    }
    SheetRun {
        avg_nn: mean(&nn_means),
        max_jump,
    }
}

fn sheet_criterion(name: &str, n_starts: usize, n_paths: usize) {
    let fix = swiss();
    let stride = fix.cloud.n_points() / n_starts;
    let starts: Vec<usize> = (0..n_starts).map(|s| s * stride).collect();
    let full = sheet_protocol(&starts, n_paths, true, 8100);
    let baseline = sheet_protocol(&starts, n_paths, false, 8200);
    let ratio = baseline.avg_nn / full.avg_nn;
    report(
        name,
        full.avg_nn <= 0.45 && full.max_jump <= 2.6 && ratio >= 3.0,
        &format!(
            "avg NN distance {:.4} (<= 0.45), max latent jump {:.4} (<= 2.6), \
             noise-only baseline {:.4} is {ratio:.1}x worse (>= 3x)",
            full.avg_nn, full.max_jump, baseline.avg_nn
        ),
    );
}

#[test]
fn criterion_08_sheet_locality_reduced_protocol() {
    sheet_criterion("08 (reduced)", 5, 10);
}

#[test]
#[ignore = "full 50-start x 100-path protocol; minutes of runtime"]
fn criterion_08_sheet_locality_full_protocol() {
    sheet_criterion("08 (full)", 50, 100);
}

/// Mean absolute difference of sorted endpoint coordinates, summed over
/// coordinates: the 1-Wasserstein distance between the empirical endpoint
/// marginals.
fn endpoint_w1(a: &[Trajectory], b: &[Trajectory]) -> f64 {
    let dim = a[0].ambient_dim();
    (0..dim)
        .map(|k| {
            let mut xs: Vec<f64> = a.iter().map(|t| t.endpoint()[k]).collect();
            let mut ys: Vec<f64> = b.iter().map(|t| t.endpoint()[k]).collect();
            xs.sort_by(f64::total_cmp);
            ys.sort_by(f64::total_cmp);
            xs.iter()
                .zip(&ys)
                .map(|(x, y)| (x - y).abs())
                .sum::<f64>()
                / xs.len() as f64
        })
        .sum()
}

#[test]
fn criterion_09_step_refinement_tightens_endpoint_laws() {
    // Moderate bandwidth: a smooth field isolates the step-size effect from
    // node-level estimation noise. All three runs share it either way.
    let fix = build_fixture(sample_sphere(2, 1.0, 10_000, 101).unwrap(), 0.3);
    let run = |h_eff: f64, steps: usize, seed: u64| -> Vec<Trajectory> {
        let mut cfg = IntegratorConfig::new(h_eff, steps);
        cfg.seed = seed;
        simulate_ensemble(
            &fix.field,
            &fix.index,
            &fix.cloud,
            &cfg,
            &DriftSpec::none(),
            None,
            &[],
            500,
        )
        .unwrap()
        .into_iter()
        .map(|r| r.unwrap())
        .collect()
    };
    // Brownian paths to T = 1 at steps h, h/2, and 4h.
    let base = 0.015625;
    let at_h = run(base, 64, 91);
    let at_half = run(base / 2.0, 128, 92);
    let at_4h = run(base * 4.0, 16, 93);
    let d_refine = endpoint_w1(&at_h, &at_half);
    let d_coarsen = endpoint_w1(&at_h, &at_4h);
    report(
        "09",
        d_refine <= d_coarsen,
        &format!(
            "halving the step moves endpoint laws by {d_refine:.4}, \
             quadrupling by {d_coarsen:.4} (refinement no worse)"
        ),
    );
}

#[test]
fn criterion_10_score_matches_the_density_oracle() {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let points =
        ndarray::Array2::from_shape_fn((300, 3), |_| rng.random::<f64>() * 2.0 - 1.0);
    let cloud = PointCloud {
        points,
        intrinsic_dim: 3,
        latent: None,
        spec: None,
    };
    let sigma = 0.25;
    let field = ScoreConfig::new(&cloud, Some(sigma)).unwrap();
    let log_density = |x: &[f64]| -> f64 {
        let exponents: Vec<f64> = cloud
            .points
            .rows()
            .into_iter()
            .map(|row| {
                let d2: f64 = row.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                -d2 / (2.0 * sigma * sigma)
            })
            .collect();
        let m = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + exponents.iter().map(|e| (e - m).exp()).sum::<f64>().ln()
    };
    let step = 1e-5;
    let mut worst_rel = 0.0f64;
    for _ in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let score = field.score_at(&x).unwrap();
        for k in 0..3 {
            let mut hi = x.clone();
            let mut lo = x.clone();
            hi[k] += step;
            lo[k] -= step;
            let fd = (log_density(&hi) - log_density(&lo)) / (2.0 * step);
            worst_rel = worst_rel.max((score[k] - fd).abs() / (1.0 + fd.abs()));
        }
    }

    // Vanishing kernel width: the stabilization step becomes a nearest
    // cloud-point lookup.
    let index = SpatialIndex::new(&cloud.points).unwrap();
    let narrow = ScoreConfig::new(&cloud, Some(1e-4 * cloud.enclosing_diameter())).unwrap();
    let mut worst_snap = 0.0f64;
    for _ in 0..100 {
        let base = rng.random_range(0..300);
        let x: Vec<f64> = cloud
            .point(base)
            .iter()
            .map(|v| v + 0.01 * (rng.random::<f64>() - 0.5))
            .collect();
        let stepped = narrow.drgd_step(&x).unwrap();
        let nn = index.knn(&x, 1).unwrap()[0].0;
        for k in 0..3 {
            worst_snap = worst_snap.max((stepped[k] - cloud.point(nn)[k]).abs());
        }
    }
    report(
        "10",
        worst_rel <= 1e-5 && worst_snap <= 1e-8,
        &format!(
            "worst relative gap to finite differences {worst_rel:.2e} (<= 1e-5); \
             vanishing-width step within {worst_snap:.2e} of the nearest point (<= 1e-8)"
        ),
    );
}
