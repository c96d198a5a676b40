//! Diffusion processes on manifolds known only through point clouds.
//!
//! The pipeline: sample a point cloud from a reference manifold
//! ([`manifolds`]), connect it into a proximity graph ([`graph`]), estimate
//! the diffusion's drift and carre-du-champ at every node ([`operator`]),
//! and integrate the resulting ambient SDE ([`sde`]), optionally stabilized
//! by a kernel-density score ([`score`]). [`metrics`] quantifies how
//! faithful the simulated paths are; [`io`] persists every artifact as CSV
//! or JSON.

pub mod error;
pub mod graph;
pub mod io;
pub mod manifolds;
pub mod metrics;
pub mod neighbors;
pub mod operator;
pub mod score;
pub mod sde;
mod util;

/// Crate version, recorded in run manifests by the CLI.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use error::{Error, Result};
pub use graph::{build_graph, default_bandwidth, GraphConfig, Kernel, ProximityGraph};
pub use manifolds::{
    project_sphere, sample_sphere, sample_swiss_roll, sample_torus, swiss_roll_latent,
    ManifoldSpec, PointCloud,
};
pub use metrics::{
    endpoint_statistic, histogram, ks_distance, radial_error, swiss_roll_report,
    vmf_statistic_cdf, vmf_statistic_density, EvalReport, HistogramRow,
};
pub use neighbors::SpatialIndex;
pub use operator::{build_operator_field, extend_to_ambient, LocalOperator, OperatorField};
pub use score::ScoreConfig;
pub use sde::{
    derive_seed, em_step, langevin_drift, potential_gradient, simulate, simulate_ensemble,
    DriftKind, DriftSpec, DynamicsMode, IntegratorConfig, Trajectory,
};
