//! `imd`: sample point clouds, build operator fields, simulate diffusions,
//! evaluate the results, and export plot-ready data.
//!
//! Every command accepts `--config FILE` (flat `key=value` lines mirroring
//! the long flag names; explicit flags win) and writes a `manifest.json`
//! next to its outputs recording the fully resolved parameters, so each
//! stage should get its own output directory.
//!
//! Exit codes: 0 success, 2 bad usage or parameters, 3 graph construction
//! failure, 4 simulation divergence, 1 anything else.

mod build;
mod config;
mod evaluate;
mod export;
mod manifest;
mod sample;
mod simulate;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "imd", version, about = "Diffusion processes on point-cloud manifolds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a point cloud from a reference manifold.
    Sample(sample::Args),
    /// Build the proximity graph and per-node operator field for a cloud.
    Build(build::Args),
    /// Integrate an ensemble of diffusion paths over a prebuilt field.
    Simulate(simulate::Args),
    /// Compute the metric set matching the cloud's manifold.
    Evaluate(evaluate::Args),
    /// Re-emit trajectories or fields as long-format CSV.
    Export(export::Args),
}

/// Failures mapped to process exit codes.
pub enum CliError {
    /// Invalid parameters, unreadable inputs, format mismatches (exit 2).
    Usage(String),
    /// Graph construction failed (exit 3).
    Graph(String),
    /// A simulated path diverged (exit 4).
    Diverged(String),
    /// Everything else, I/O foremost (exit 1).
    Other(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Graph(m) | CliError::Diverged(m) | CliError::Other(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<imd::Error> for CliError {
    fn from(e: imd::Error) -> Self {
        match e {
            imd::Error::InvalidParameter(_)
            | imd::Error::DegenerateInput(_)
            | imd::Error::OutOfDomain(_)
            | imd::Error::Parse { .. } => CliError::Usage(e.to_string()),
            imd::Error::Isolated { .. } => CliError::Graph(e.to_string()),
            imd::Error::Diverged { .. } => CliError::Diverged(e.to_string()),
            imd::Error::Io(_) => CliError::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Graph(_) => 3,
            CliError::Diverged(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

pub fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

/// Sizes the worker pool: `--threads`, then `IMD_THREADS`, then all cores.
pub fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    let n = match threads {
        Some(n) => Some(n),
        None => match std::env::var("IMD_THREADS") {
            Ok(v) => Some(
                v.parse::<usize>()
                    .map_err(|_| usage(format!("IMD_THREADS must be an integer, got {v:?}")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(usage("thread count must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Other(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(args) => sample::run(args),
        Command::Build(args) => build::run(args),
        Command::Simulate(args) => simulate::run(args),
        Command::Evaluate(args) => evaluate::run(args),
        Command::Export(args) => export::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
