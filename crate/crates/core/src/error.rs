use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
///
/// Variants are grouped by failure source so callers (in particular the CLI)
/// can map them to distinct exit statuses: parameter and input problems,
/// graph-construction failures, and simulation divergence.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("out of domain: {0}")]
    OutOfDomain(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// A node has no neighbor under the configured kernel and bandwidth.
    /// `suggested` is the smallest bandwidth that would give it one.
    #[error(
        "graph construction failed: node {node} is isolated at bandwidth {bandwidth}; \
         smallest connecting bandwidth is {suggested}"
    )]
    Isolated {
        node: usize,
        bandwidth: f64,
        suggested: f64,
    },

    /// The integrator produced a non-finite state or left the guard region.
    #[error("simulation diverged at step {step}: |x| = {norm} exceeds limit {limit}")]
    Diverged {
        step: usize,
        state: Vec<f64>,
        norm: f64,
        limit: f64,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
