//! Two-stage stochastic integer programs with finite support: the extensive
//! form, the single-scenario surrogate, and the objective value function.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mip::{self, MipError, MipProblem, MipStatus, RowSense, SolverConfig};

pub const FEAS_TOL: f64 = mip::FEAS_TOL;
pub const INT_TOL: f64 = mip::INT_TOL;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid scenario probabilities: {0}")]
    Probability(String),
    #[error("first-stage point is infeasible (violation {violation:.3e}, integrality {integrality:.3e})")]
    FirstStageInfeasible { violation: f64, integrality: f64 },
    #[error("second stage of scenario {scenario} is infeasible; complete recourse does not hold")]
    CompleteRecourseViolation { scenario: usize },
    #[error("second stage of scenario {scenario} ended with status {status:?}")]
    SecondStage { scenario: usize, status: MipStatus },
    #[error("surrogate problem ended with status {0:?}")]
    Surrogate(MipStatus),
    #[error(transparent)]
    Solver(#[from] MipError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Row-major dense matrix, serialized as a list of rows.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(ModelError::Dimension("ragged matrix rows".into()));
        }
        Ok(DenseMatrix { rows: rows.len(), cols, data: rows.into_iter().flatten().collect() })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    fn has_shape(&self, rows: usize, cols: usize) -> bool {
        self.rows == rows && (self.cols == cols || rows == 0)
    }
}

impl Serialize for DenseMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<&[f64]> = (0..self.rows).map(|i| self.row(i)).collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for DenseMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        DenseMatrix::from_rows(rows).map_err(serde::de::Error::custom)
    }
}

/// One realization `(q, h, T)` of the uncertain data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(rename = "p")]
    pub probability: f64,
    pub q: Vec<f64>,
    pub h: Vec<f64>,
    #[serde(rename = "T")]
    pub t: DenseMatrix,
}

/// `min c x + E[Q(x, xi)]  s.t.  A x <= b,  x_i integral for i in int_first`,
/// where `Q(x, xi) = min { q y : W y <= h - T x, y >= 0, y_j integral for j in int_second }`.
///
/// Index sets are zero-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoStageInstance {
    pub c: Vec<f64>,
    #[serde(rename = "A")]
    pub a: DenseMatrix,
    pub b: Vec<f64>,
    #[serde(rename = "W")]
    pub w: DenseMatrix,
    pub int_first: Vec<usize>,
    pub int_second: Vec<usize>,
    pub scenarios: Vec<Scenario>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstStageSolution {
    pub x: Vec<f64>,
    pub objective_ovf: Option<f64>,
}

/// Breakdown of one objective-value-function evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct OvfEvaluation {
    pub value: f64,
    pub first_stage_cost: f64,
    /// Optimal second-stage cost per scenario, in scenario order.
    pub recourse: Vec<f64>,
}

impl TwoStageInstance {
    pub fn n1(&self) -> usize {
        self.c.len()
    }

    pub fn n2(&self) -> usize {
        self.w.ncols()
    }

    pub fn m1(&self) -> usize {
        self.a.nrows()
    }

    pub fn m2(&self) -> usize {
        self.w.nrows()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let (n1, m1, m2) = (self.n1(), self.m1(), self.m2());
        let dim = |msg: String| Err(ModelError::Dimension(msg));
        if n1 == 0 {
            return dim("first stage has no variables".into());
        }
        if !self.a.has_shape(m1, n1) || self.b.len() != m1 {
            return dim(format!("A must be {m1}x{n1} with b of length {m1}"));
        }
        if self.scenarios.is_empty() {
            return Err(ModelError::Probability("scenario set is empty".into()));
        }
        let n2 = self.n2();
        if m2 > 0 && n2 == 0 {
            return dim("W has rows but no columns".into());
        }
        for (s, sc) in self.scenarios.iter().enumerate() {
            if sc.q.len() != n2 || sc.h.len() != m2 || !sc.t.has_shape(m2, n1) {
                return dim(format!("scenario {s} must have q of length {n2}, h of length {m2}, T of shape {m2}x{n1}"));
            }
            if !(sc.probability >= 0.0) || !sc.probability.is_finite() {
                return Err(ModelError::Probability(format!("scenario {s} has probability {}", sc.probability)));
            }
            if !sc.t.is_finite() || sc.q.iter().chain(&sc.h).any(|v| !v.is_finite()) {
                return dim(format!("scenario {s} has non-finite data"));
            }
        }
        let total: f64 = self.scenarios.iter().map(|s| s.probability).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(ModelError::Probability(format!("probabilities sum to {total}")));
        }
        if let Some(&i) = self.int_first.iter().find(|&&i| i >= n1) {
            return dim(format!("int_first index {i} out of range"));
        }
        if let Some(&i) = self.int_second.iter().find(|&&i| i >= n2) {
            return dim(format!("int_second index {i} out of range"));
        }
        if !self.a.is_finite() || !self.w.is_finite() || self.c.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return dim("non-finite first-stage or recourse data".into());
        }
        Ok(())
    }

    /// Probability-weighted mean of `(q, h, T)` over the scenarios.
    pub fn mean_scenario(&self) -> Scenario {
        let (n1, n2, m2) = (self.n1(), self.n2(), self.m2());
        let mut q = vec![0.0; n2];
        let mut h = vec![0.0; m2];
        let mut t = DenseMatrix::zeros(m2, n1);
        for sc in &self.scenarios {
            let p = sc.probability;
            q.iter_mut().zip(&sc.q).for_each(|(a, b)| *a += p * b);
            h.iter_mut().zip(&sc.h).for_each(|(a, b)| *a += p * b);
            t.data.iter_mut().zip(&sc.t.data).for_each(|(a, b)| *a += p * b);
        }
        Scenario { probability: 1.0, q, h, t }
    }

    fn check_scenario_shape(&self, sc: &Scenario) -> Result<(), ModelError> {
        let (n1, n2, m2) = (self.n1(), self.n2(), self.m2());
        if sc.q.len() != n2 || sc.h.len() != m2 || !sc.t.has_shape(m2, n1) {
            return Err(ModelError::Dimension(format!(
                "scenario must have q of length {n2}, h of length {m2}, T of shape {m2}x{n1}"
            )));
        }
        Ok(())
    }

    pub fn first_stage_violation(&self, x: &[f64]) -> (f64, f64) {
        let ax = self.a.mul_vec(x);
        let viol = ax.iter().zip(&self.b).map(|(l, r)| (l - r).max(0.0)).fold(0.0, f64::max);
        let int = self.int_first.iter().map(|&i| (x[i] - x[i].round()).abs()).fold(0.0, f64::max);
        (viol, int)
    }

    pub fn first_stage_cost(&self, x: &[f64]) -> f64 {
        self.c.iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn from_json_str(s: &str) -> Result<Self, ModelError> {
        let inst: TwoStageInstance = serde_json::from_str(s)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn read_json(path: &Path) -> Result<Self, ModelError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }
}

/// Also gives the first-stage columns branching priority over the recourse columns.
fn add_first_stage(p: &mut MipProblem, inst: &TwoStageInstance) {
    p.branch_priority = vec![0; p.num_vars()];
    for j in 0..inst.n1() {
        p.branch_priority[j] = 1;
    }
    for j in 0..inst.n1() {
        p.set_bounds(j, f64::NEG_INFINITY, f64::INFINITY);
    }
    for &j in &inst.int_first {
        p.integer[j] = true;
    }
    for i in 0..inst.m1() {
        let coeffs = sparse(inst.a.row(i), 0);
        p.add_row(coeffs, RowSense::Le, inst.b[i]);
    }
}

fn sparse(row: &[f64], offset: usize) -> Vec<(usize, f64)> {
    row.iter().enumerate().filter(|(_, &a)| a != 0.0).map(|(j, &a)| (offset + j, a)).collect()
}

/// Adds `W y + T x <= h` for one block of second-stage columns starting at `offset`.
fn add_recourse_block(p: &mut MipProblem, inst: &TwoStageInstance, sc: &Scenario, offset: usize) {
    for &j in &inst.int_second {
        p.integer[offset + j] = true;
    }
    for i in 0..inst.m2() {
        let mut coeffs = sparse(sc.t.row(i), 0);
        coeffs.extend(sparse(inst.w.row(i), offset));
        p.add_row(coeffs, RowSense::Le, sc.h[i]);
    }
}

/// Deterministic equivalent over all scenarios. Columns are `x` followed by
/// one `y` block per scenario, in scenario order.
pub fn build_extensive_form(inst: &TwoStageInstance) -> Result<MipProblem, ModelError> {
    inst.validate()?;
    let (n1, n2) = (inst.n1(), inst.n2());
    let mut obj = inst.c.clone();
    for sc in &inst.scenarios {
        obj.extend(sc.q.iter().map(|q| sc.probability * q));
    }
    let mut p = MipProblem::new(obj);
    add_first_stage(&mut p, inst);
    for (s, sc) in inst.scenarios.iter().enumerate() {
        add_recourse_block(&mut p, inst, sc, n1 + s * n2);
    }
    Ok(p)
}

/// Single-scenario problem obtained by fixing the uncertain data to `xi`;
/// `xi.probability` is ignored. Columns are `x` followed by `y`.
pub fn build_surrogate(inst: &TwoStageInstance, xi: &Scenario) -> Result<MipProblem, ModelError> {
    inst.validate()?;
    inst.check_scenario_shape(xi)?;
    let mut obj = inst.c.clone();
    obj.extend_from_slice(&xi.q);
    let mut p = MipProblem::new(obj);
    add_first_stage(&mut p, inst);
    add_recourse_block(&mut p, inst, xi, inst.n1());
    Ok(p)
}

/// Solves the surrogate for `xi` and returns its first-stage part.
pub fn solve_surrogate(inst: &TwoStageInstance, xi: &Scenario, cfg: &SolverConfig) -> Result<Vec<f64>, ModelError> {
    let p = build_surrogate(inst, xi)?;
    let sol = mip::solve_mip(&p, cfg)?;
    if !sol.has_incumbent() {
        return Err(ModelError::Surrogate(sol.status));
    }
    Ok(sol.x[..inst.n1()].to_vec())
}

/// The recourse problem `Q(x, xi)` for a fixed first-stage point.
pub fn second_stage_problem(inst: &TwoStageInstance, sc: &Scenario, x: &[f64]) -> MipProblem {
    let tx = sc.t.mul_vec(x);
    let mut p = MipProblem::new(sc.q.clone());
    for &j in &inst.int_second {
        p.integer[j] = true;
    }
    for i in 0..inst.m2() {
        p.add_row(sparse(inst.w.row(i), 0), RowSense::Le, sc.h[i] - tx[i]);
    }
    p
}

fn recourse_value(inst: &TwoStageInstance, s: usize, x: &[f64], cfg: &SolverConfig) -> Result<f64, ModelError> {
    let sc = &inst.scenarios[s];
    let p = second_stage_problem(inst, sc, x);
    let sol = mip::solve_mip(&p, cfg)?;
    match sol.status {
        MipStatus::Optimal | MipStatus::GapLimit if sol.has_incumbent() => Ok(sol.best_objective),
        MipStatus::Infeasible => Err(ModelError::CompleteRecourseViolation { scenario: s }),
        status => Err(ModelError::SecondStage { scenario: s, status }),
    }
}

/// `c x + sum_xi p_xi Q(x, xi)`, solving each recourse problem to optimality.
pub fn evaluate_ovf(inst: &TwoStageInstance, x: &[f64]) -> Result<f64, ModelError> {
    Ok(evaluate_ovf_detailed(inst, x, &SolverConfig::exact())?.value)
}

/// Like [`evaluate_ovf`] with an explicit recourse solver configuration.
/// Scenarios are solved in parallel; the sum is reduced in scenario order.
pub fn evaluate_ovf_detailed(
    inst: &TwoStageInstance,
    x: &[f64],
    cfg: &SolverConfig,
) -> Result<OvfEvaluation, ModelError> {
    if x.len() != inst.n1() {
        return Err(ModelError::Dimension(format!("first-stage point has length {}, expected {}", x.len(), inst.n1())));
    }
    let (violation, integrality) = inst.first_stage_violation(x);
    if violation > FEAS_TOL || integrality > INT_TOL {
        return Err(ModelError::FirstStageInfeasible { violation, integrality });
    }
    let recourse: Vec<f64> =
        (0..inst.scenarios.len()).into_par_iter().map(|s| recourse_value(inst, s, x, cfg)).collect::<Result<_, _>>()?;
    let first_stage_cost = inst.first_stage_cost(x);
    let value = first_stage_cost + inst.scenarios.iter().zip(&recourse).map(|(sc, q)| sc.probability * q).sum::<f64>();
    Ok(OvfEvaluation { value, first_stage_cost, recourse })
}
