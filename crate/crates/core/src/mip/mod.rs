//! Mixed-integer linear programming: a bounded dual/primal simplex, LP-based
//! branch and bound, and an MPS file bridge to external solvers.

mod bnb;
pub mod external;
pub mod mps;
mod problem;
pub mod simplex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use problem::{MipProblem, Row, RowSense};
pub use simplex::LpStatus;
use simplex::{RangeRow, Simplex};

/// Constraint feasibility tolerance applied to returned solutions.
pub const FEAS_TOL: f64 = 1e-6;
/// Integrality tolerance applied to returned solutions.
pub const INT_TOL: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum MipError {
    #[error("malformed problem: {0}")]
    Malformed(String),
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("external solver backend failed: {message}\n{diagnostics}")]
    Backend { message: String, diagnostics: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MipStatus {
    Optimal,
    GapLimit,
    TimeLimit,
    Infeasible,
    Unbounded,
}

impl MipStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            MipStatus::Optimal => "optimal",
            MipStatus::GapLimit => "gap_limit",
            MipStatus::TimeLimit => "time_limit",
            MipStatus::Infeasible => "infeasible",
            MipStatus::Unbounded => "unbounded",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "optimal" => MipStatus::Optimal,
            "gap_limit" => MipStatus::GapLimit,
            "time_limit" => MipStatus::TimeLimit,
            "infeasible" => MipStatus::Infeasible,
            "unbounded" => MipStatus::Unbounded,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MipSolution {
    pub status: MipStatus,
    pub best_objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub x: Vec<f64>,
    /// `(seconds since solve start, objective)` per incumbent improvement.
    pub incumbent_trajectory: Vec<(f64, f64)>,
    pub nodes: usize,
    pub branchings: usize,
    pub lp_iterations: usize,
}

impl MipSolution {
    pub(crate) fn empty(status: MipStatus) -> Self {
        MipSolution {
            status,
            best_objective: f64::INFINITY,
            best_bound: f64::NEG_INFINITY,
            gap: f64::INFINITY,
            x: Vec::new(),
            incumbent_trajectory: Vec::new(),
            nodes: 0,
            branchings: 0,
            lp_iterations: 0,
        }
    }

    pub fn has_incumbent(&self) -> bool {
        !self.x.is_empty() && self.best_objective.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Backend {
    Internal,
    /// Shell command with `{input} {output} {gap} {timelimit} {threads}` placeholders.
    External {
        command: String,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub gap_limit: f64,
    /// Seconds.
    pub time_limit: f64,
    pub threads: usize,
    pub backend: Backend,
    pub seed: u64,
    pub node_limit: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            gap_limit: 0.02,
            time_limit: 600.0,
            threads: 1,
            backend: Backend::Internal,
            seed: 0,
            node_limit: None,
        }
    }
}

impl SolverConfig {
    /// Configuration for solves that must be proven optimal.
    pub fn exact() -> Self {
        SolverConfig { gap_limit: 1e-9, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), MipError> {
        if !(self.gap_limit >= 0.0) {
            return Err(MipError::Malformed("gap_limit must be >= 0".into()));
        }
        if !(self.time_limit > 0.0) {
            return Err(MipError::Malformed("time_limit must be > 0".into()));
        }
        if self.threads == 0 {
            return Err(MipError::Malformed("threads must be >= 1".into()));
        }
        Ok(())
    }
}

/// Result of an LP relaxation solve. Integrality flags are ignored.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    /// One multiplier per problem row; reduced costs are `c - A^T duals`.
    pub duals: Vec<f64>,
}

pub fn solve_lp(p: &MipProblem) -> Result<LpSolution, MipError> {
    p.validate()?;
    let rows = p
        .rows
        .iter()
        .map(|r| {
            let (lo, hi) = match r.sense {
                RowSense::Le => (f64::NEG_INFINITY, r.rhs),
                RowSense::Ge => (r.rhs, f64::INFINITY),
                RowSense::Eq => (r.rhs, r.rhs),
            };
            RangeRow { coeffs: r.coeffs.clone(), lo, hi }
        })
        .collect();
    let mut lp = Simplex::new(&p.objective, rows, &p.lower, &p.upper);
    let limit = 50 * (p.num_vars() + p.num_rows()) + 1000;
    let status = lp.solve(limit);
    let objective = match status {
        LpStatus::Optimal => lp.objective(),
        LpStatus::Unbounded => f64::NEG_INFINITY,
        _ => f64::INFINITY,
    };
    Ok(LpSolution { status, objective, x: lp.primal().to_vec(), duals: lp.row_duals() })
}

/// Solves `p` with the backend selected in `cfg`.
pub fn solve_mip(p: &MipProblem, cfg: &SolverConfig) -> Result<MipSolution, MipError> {
    p.validate()?;
    cfg.validate()?;
    match &cfg.backend {
        Backend::Internal => Ok(bnb::branch_and_bound(p, cfg)),
        Backend::External { command } => external::solve_external(p, cfg, command),
    }
}

#[cfg(test)]
mod tests;
