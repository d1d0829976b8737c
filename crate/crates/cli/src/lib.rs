//! Command-line pipeline driver: config handling, manifests and stages.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod config;
pub mod error;
pub mod manifest;
pub mod stages;

use std::path::{Path, PathBuf};

use repscen::mip::{external::to_solution_string, mps::read_mps, solve_mip, SolverConfig};

pub use config::RunConfig;
pub use error::CliError;
pub use stages::{Context, TrainKind};

/// Loads `path` (or the defaults) and applies command-line overrides.
pub fn effective_config(path: Option<&Path>, seed: Option<u64>, out: Option<PathBuf>) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out = o;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Solves an MPS file with the built-in engine and writes a solution file in
/// the format the external bridge reads.
pub fn solve_mps_file(input: &Path, output: &Path, cfg: &SolverConfig) -> Result<(), CliError> {
    let (p, names) = read_mps(input).map_err(|e| CliError::upstream(input, e))?;
    let sol = solve_mip(&p, cfg).map_err(|e| CliError::Backend(e.to_string()))?;
    std::fs::write(output, to_solution_string(&sol, &names)).map_err(CliError::other)
}
