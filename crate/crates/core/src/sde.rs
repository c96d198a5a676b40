//! Euler-Maruyama integration of the estimated ambient SDE, with drift terms
//! for sampling from von Mises-Fisher and quadratic potentials.
//!
//! One step from state `x` with standard-normal draw `xi`:
//!
//! ```text
//! x' = x + [ drift(x) + langevin(x) ] h_eff + sqrt(h_eff) cdc_sqrt(x) xi
//! h_eff = step * speedup
//! ```
//!
//! where `drift`, `cdc`, and `cdc_sqrt` come from the operator field extended
//! to `x` through its nearest nodes, and `langevin = -(beta/2) cdc grad U`.
//! The half factor makes the stationary density proportional to
//! `exp(-beta U)` under the half-Laplacian noise convention; `beta` defaults
//! to 1. The von Mises-Fisher potential is `U(x) = -kappa mu . x`, so the
//! drift attracts toward the mode `mu`.
//!
//! An optional stabilization step follows each update, replacing the state
//! with the kernel-density barycenter `drgd_step(x')`; recorded states are
//! the stabilized ones.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::manifolds::{ManifoldSpec, PointCloud};
use crate::neighbors::SpatialIndex;
use crate::operator::{extend_hinted, OperatorField};
use crate::score::ScoreConfig;
use crate::util::norm;

/// Multiple of the cloud's enclosing diameter beyond which a path is
/// declared divergent.
const GUARD_DIAMETERS: f64 = 100.0;

/// Potential entering the Langevin drift.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftKind {
    None,
    Vmf { mu: Array1<f64>, kappa: f64 },
    Quadratic { z_star: Array1<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftSpec {
    pub kind: DriftKind,
    /// Inverse-temperature scale on the potential; the stationary density is
    /// proportional to `exp(-beta U)`.
    pub beta: f64,
}

impl Default for DriftSpec {
    fn default() -> Self {
        DriftSpec {
            kind: DriftKind::None,
            beta: 1.0,
        }
    }
}

impl DriftSpec {
    pub fn none() -> Self {
        DriftSpec::default()
    }

    pub fn validate(&self, ambient: usize) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "potential scale must be positive and finite, got {}",
                self.beta
            )));
        }
        match &self.kind {
            DriftKind::None => Ok(()),
            DriftKind::Vmf { mu, kappa } => {
                if mu.len() != ambient {
                    return Err(Error::InvalidParameter(format!(
                        "mode direction has dimension {}, ambient space has {ambient}",
                        mu.len()
                    )));
                }
                let n = norm(mu.as_slice().expect("contiguous"));
                if (n - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "mode direction must be a unit vector, |mu| = {n}"
                    )));
                }
                if !(*kappa > 0.0) || !kappa.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "concentration must be positive and finite, got {kappa}"
                    )));
                }
                Ok(())
            }
            DriftKind::Quadratic { z_star } => {
                if z_star.len() != ambient {
                    return Err(Error::InvalidParameter(format!(
                        "potential center has dimension {}, ambient space has {ambient}",
                        z_star.len()
                    )));
                }
                if z_star.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidParameter(
                        "potential center is not finite".into(),
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Which terms of the estimated dynamics to keep. The reduced modes are
/// baselines: `CdcOnly` keeps only the carre-du-champ noise, `AmbientNoise`
/// replaces the noise matrix with the identity; both drop the drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynamicsMode {
    Full,
    CdcOnly,
    AmbientNoise,
}

#[derive(Debug, Clone)]
pub struct IntegratorConfig {
    /// Base time step.
    pub step: f64,
    /// Number of steps to integrate.
    pub steps: usize,
    /// Dimensionless multiplier on the step.
    pub speedup: f64,
    pub seed: u64,
    pub drgd_enabled: bool,
    /// Number of nearest nodes blended when the field is evaluated off-cloud.
    pub knn_extension: usize,
    pub mode: DynamicsMode,
}

impl IntegratorConfig {
    pub fn new(step: f64, steps: usize) -> Self {
        IntegratorConfig {
            step,
            steps,
            speedup: 1.0,
            seed: 0,
            drgd_enabled: false,
            knn_extension: 1,
            mode: DynamicsMode::Full,
        }
    }

    pub fn h_eff(&self) -> f64 {
        self.step * self.speedup
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !self.step.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "step must be positive and finite, got {}",
                self.step
            )));
        }
        if !(self.speedup > 0.0) || !self.speedup.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "speedup must be positive and finite, got {}",
                self.speedup
            )));
        }
        if self.knn_extension == 0 {
            return Err(Error::InvalidParameter(
                "extension neighborhood must have at least one node".into(),
            ));
        }
        Ok(())
    }
}

/// A realized path: `times[l] = l * h_eff`, one state row per time.
/// `radial_err` is recorded when the cloud declares a sphere; `nn_dist`
/// (distance to the nearest cloud point) is recorded for every simulation.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Array2<f64>,
    pub radial_err: Option<Vec<f64>>,
    pub nn_dist: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn n_states(&self) -> usize {
        self.states.nrows()
    }

    pub fn ambient_dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn state(&self, l: usize) -> &[f64] {
        let n = self.states.ncols();
        &self.states.as_slice().expect("row-major storage")[l * n..(l + 1) * n]
    }

    pub fn endpoint(&self) -> &[f64] {
        self.state(self.n_states() - 1)
    }
}

/// Ambient gradient of the potential: zero, `-kappa mu`, or `x - z_star`.
pub fn potential_gradient(spec: &DriftSpec, x: &[f64]) -> Array1<f64> {
    match &spec.kind {
        DriftKind::None => Array1::zeros(x.len()),
        DriftKind::Vmf { mu, kappa } => mu.mapv(|m| -kappa * m),
        DriftKind::Quadratic { z_star } => {
            Array1::from_iter(x.iter().zip(z_star).map(|(xi, zi)| xi - zi))
        }
    }
}

/// Tangentially projected potential force `-(beta/2) cdc grad U(x)`.
pub fn langevin_drift(spec: &DriftSpec, cdc: &Array2<f64>, x: &[f64]) -> Array1<f64> {
    match spec.kind {
        DriftKind::None => Array1::zeros(x.len()),
        _ => {
            let grad = potential_gradient(spec, x);
            let mut out = cdc.dot(&grad);
            out.mapv_inplace(|v| v * (-0.5 * spec.beta));
            out
        }
    }
}

/// One integrator step from `x` with the caller-supplied standard-normal
/// draw `xi`. A non-finite result is reported as divergence at step 0; the
/// driver rewrites the step index.
pub fn em_step(
    field: &OperatorField,
    index: &SpatialIndex,
    cfg: &IntegratorConfig,
    spec: &DriftSpec,
    x: &[f64],
    xi: &[f64],
) -> Result<Array1<f64>> {
    em_step_hinted(field, index, cfg, spec, x, xi, &mut None)
}

/// `em_step` threading the nearest-node hint between consecutive calls; a
/// slowly moving state then pays a near-constant extension cost per step.
fn em_step_hinted(
    field: &OperatorField,
    index: &SpatialIndex,
    cfg: &IntegratorConfig,
    spec: &DriftSpec,
    x: &[f64],
    xi: &[f64],
    hint: &mut Option<usize>,
) -> Result<Array1<f64>> {
    let (local, node) = extend_hinted(field, index, x, cfg.knn_extension, *hint)?;
    *hint = Some(node);
    let h_eff = cfg.h_eff();
    let sqrt_h = h_eff.sqrt();
    let xi = ndarray::ArrayView1::from(xi);
    let mut next = Array1::from_iter(x.iter().cloned());
    match cfg.mode {
        DynamicsMode::Full => {
            let lang = langevin_drift(spec, &local.cdc, x);
            let noise = local.cdc_sqrt.dot(&xi);
            for k in 0..next.len() {
                next[k] += (local.drift[k] + lang[k]) * h_eff + sqrt_h * noise[k];
            }
        }
        DynamicsMode::CdcOnly => {
            let noise = local.cdc_sqrt.dot(&xi);
            for k in 0..next.len() {
                next[k] += sqrt_h * noise[k];
            }
        }
        DynamicsMode::AmbientNoise => {
            for k in 0..next.len() {
                next[k] += sqrt_h * xi[k];
            }
        }
    }
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged {
            step: 0,
            state: next.to_vec(),
            norm: norm(next.as_slice().expect("contiguous")),
            limit: f64::INFINITY,
        });
    }
    Ok(next)
}

/// Integrates `cfg.steps` steps from `x0` (default: the first cloud point),
/// applying the stabilization step after each update when enabled.
pub fn simulate(
    field: &OperatorField,
    index: &SpatialIndex,
    cloud: &PointCloud,
    cfg: &IntegratorConfig,
    spec: &DriftSpec,
    score: Option<&ScoreConfig>,
    x0: Option<&[f64]>,
) -> Result<Trajectory> {
    cfg.validate()?;
    let ambient = cloud.ambient_dim();
    spec.validate(ambient)?;
    if cfg.drgd_enabled && score.is_none() {
        return Err(Error::InvalidParameter(
            "stabilization is enabled but no score is provided".into(),
        ));
    }
    let default_start;
    let x0 = match x0 {
        Some(x) => x,
        None => {
            default_start = cloud.point(0).to_vec();
            &default_start
        }
    };
    if x0.len() != ambient {
        return Err(Error::InvalidParameter(format!(
            "start has dimension {}, cloud has {ambient}",
            x0.len()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("start is not finite".into()));
    }

    let radius = match cloud.spec {
        Some(ManifoldSpec::Sphere { radius, .. }) => Some(radius),
        _ => None,
    };
    let guard = GUARD_DIAMETERS * cloud.enclosing_diameter();
    let h_eff = cfg.h_eff();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let n_states = cfg.steps + 1;
    let mut times = Vec::with_capacity(n_states);
    let mut states = Array2::<f64>::zeros((n_states, ambient));
    let mut radial = radius.map(|_| Vec::with_capacity(n_states));
    let mut nn = Vec::with_capacity(n_states);

    let record = |l: usize,
                      x: &[f64],
                      hint: &mut Option<usize>,
                      states: &mut Array2<f64>,
                      radial: &mut Option<Vec<f64>>,
                      nn: &mut Vec<f64>|
     -> Result<()> {
        for (k, &v) in x.iter().enumerate() {
            states[[l, k]] = v;
        }
        if let (Some(r), Some(rs)) = (radius, radial.as_mut()) {
            rs.push((norm(x) - r).abs());
        }
        let (node, dist) = match *hint {
            Some(h) => index.nearest_from(x, h)?,
            None => index.knn(x, 1)?[0],
        };
        *hint = Some(node);
        nn.push(dist);
        Ok(())
    };

    let mut x = x0.to_vec();
    // One hint for the extension, one for the nearest-node diagnostic; both
    // trail their own query sequence.
    let mut step_hint: Option<usize> = None;
    let mut record_hint: Option<usize> = None;
    times.push(0.0);
    record(0, &x, &mut record_hint, &mut states, &mut radial, &mut nn)?;

    let mut xi = vec![0.0; ambient];
    for l in 1..=cfg.steps {
        for z in xi.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        let mut next = em_step_hinted(field, index, cfg, spec, &x, &xi, &mut step_hint)
            .map_err(|e| match e {
            Error::Diverged { state, norm, .. } => Error::Diverged {
                step: l,
                state,
                norm,
                limit: guard,
            },
            other => other,
        })?;
        if cfg.drgd_enabled {
            let score = score.expect("checked above");
            next = score.drgd_step(next.as_slice().expect("contiguous"))?;
        }
        let state_norm = norm(next.as_slice().expect("contiguous"));
        // guard == 0 only for a single-point cloud, where nothing can move.
        if guard > 0.0 && state_norm > guard {
            return Err(Error::Diverged {
                step: l,
                state: next.to_vec(),
                norm: state_norm,
                limit: guard,
            });
        }
        x = next.to_vec();
        times.push(l as f64 * h_eff);
        record(l, &x, &mut record_hint, &mut states, &mut radial, &mut nn)?;
    }

    Ok(Trajectory {
        times,
        states,
        radial_err: radial,
        nn_dist: Some(nn),
    })
}

/// Splitmix-style seed derivation: path `index` of a run seeded with `seed`
/// gets an independent, order-free substream seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add((index.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs `n_paths` independent paths from each start (default: the first
/// cloud point when `x0s` is empty). Path `p` from start `s` uses the seed
/// derived from index `s * n_paths + p`, so results do not depend on
/// execution order. Per-path failures are returned in place, without
/// aborting the rest.
#[allow(clippy::too_many_arguments)]
pub fn simulate_ensemble(
    field: &OperatorField,
    index: &SpatialIndex,
    cloud: &PointCloud,
    cfg: &IntegratorConfig,
    spec: &DriftSpec,
    score: Option<&ScoreConfig>,
    x0s: &[Vec<f64>],
    n_paths: usize,
) -> Result<Vec<Result<Trajectory>>> {
    if n_paths == 0 {
        return Err(Error::InvalidParameter(
            "ensemble needs at least one path per start".into(),
        ));
    }
    cfg.validate()?;
    let default_start = vec![cloud.point(0).to_vec()];
    let starts: &[Vec<f64>] = if x0s.is_empty() { &default_start } else { x0s };
    let jobs: Vec<(usize, &[f64])> = starts
        .iter()
        .enumerate()
        .flat_map(|(s, x0)| (0..n_paths).map(move |p| (s * n_paths + p, x0.as_slice())))
        .collect();
    Ok(jobs
        .into_par_iter()
        .map(|(global, x0)| {
            let mut sub = cfg.clone();
            sub.seed = derive_seed(cfg.seed, global as u64);
            simulate(field, index, cloud, &sub, spec, score, Some(x0))
        })
        .collect())
}
