//! Representative-scenario learning for two-stage stochastic integer programs.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod cflp;
pub mod eval;
pub mod features;
pub mod learn;
pub mod mip;
pub mod model;
pub mod rs_search;
pub mod seeds;

pub use cflp::{CflpInstance, GeneratorConfig};
pub use mip::{MipProblem, MipSolution, MipStatus, SolverConfig};
pub use model::{FirstStageSolution, Scenario, TwoStageInstance};
