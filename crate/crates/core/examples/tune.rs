//! Scratch scan for acceptance tuning. Not part of the deliverable.

use std::time::Instant;

use imd::{
    default_bandwidth, ks_distance, sample_sphere, simulate_ensemble, vmf_statistic_cdf,
    DriftKind, DriftSpec, IntegratorConfig, ScoreConfig, Trajectory,
};
use ndarray::arr1;

fn main() {
    let cloud = sample_sphere(7, 1.0, 20_000, 202).unwrap();
    let bw = default_bandwidth(&cloud.points).unwrap();
    let index = imd::SpatialIndex::new(&cloud.points).unwrap();
    let graph = imd::build_graph(&cloud, &index, imd::GraphConfig::new(bw, 7)).unwrap();
    let field = imd::build_operator_field(&graph);
    let mu = arr1(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let spec = DriftSpec {
        kind: DriftKind::Vmf {
            mu: mu.clone(),
            kappa: 10.0,
        },
        beta: 1.0,
    };
    for &sigma in &[0.08, 0.10, 0.15] {
        let score = ScoreConfig::new(&cloud, Some(sigma)).unwrap();
        for &h in &[0.01f64, 0.02, 0.04] {
            let steps = (2.0 / h).round() as usize;
            let mut cfg = IntegratorConfig::new(h, steps);
            cfg.seed = 31;
            cfg.drgd_enabled = true;
            let t0 = Instant::now();
            let trajs: Vec<Trajectory> =
                simulate_ensemble(&field, &index, &cloud, &cfg, &spec, Some(&score), &[], 500)
                    .unwrap()
                    .into_iter()
                    .map(|r| r.unwrap())
                    .collect();
            let stats = imd::endpoint_statistic(&trajs, mu.as_slice().unwrap()).unwrap();
            let ks = ks_distance(&stats, |t| vmf_statistic_cdf(8, 10.0, t).unwrap()).unwrap();
            let mean_t = stats.iter().sum::<f64>() / stats.len() as f64;
            let sd_t = (stats.iter().map(|t| (t - mean_t).powi(2)).sum::<f64>()
                / stats.len() as f64)
                .sqrt();
            let mean_r = trajs
                .iter()
                .map(|t| t.endpoint().iter().map(|v| v * v).sum::<f64>().sqrt())
                .sum::<f64>()
                / trajs.len() as f64;
            println!(
                "sigma {sigma:.2} h_eff {h:.3} L {steps}: KS {ks:.4}, mean t {mean_t:.4}, \
                 sd t {sd_t:.4}, mean end radius {mean_r:.4} ({:.1?})",
                t0.elapsed()
            );
        }
    }
}
