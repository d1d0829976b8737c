use serde::{Deserialize, Serialize};

use super::MipError;

/// Constraint direction of a single row.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

/// A sparse constraint row `coeffs · x (sense) rhs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl Row {
    pub fn new(coeffs: Vec<(usize, f64)>, sense: RowSense, rhs: f64) -> Self {
        Row { coeffs, sense, rhs }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates this row (zero when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let act = self.activity(x);
        match self.sense {
            RowSense::Le => (act - self.rhs).max(0.0),
            RowSense::Ge => (self.rhs - act).max(0.0),
            RowSense::Eq => (act - self.rhs).abs(),
        }
    }
}

/// Mixed-integer linear program in minimization form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MipProblem {
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer: Vec<bool>,
    /// Branching priority per variable, higher first; empty means uniform.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub branch_priority: Vec<u32>,
}

impl MipProblem {
    /// Creates a problem with `n` continuous variables in `[0, +inf)`.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        MipProblem {
            objective,
            rows: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
            integer: vec![false; n],
            branch_priority: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, sense: RowSense, rhs: f64) {
        self.rows.push(Row::new(coeffs, sense, rhs));
    }

    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lower[j] = lo;
        self.upper[j] = hi;
    }

    pub fn set_binary(&mut self, j: usize) {
        self.lower[j] = 0.0;
        self.upper[j] = 1.0;
        self.integer[j] = true;
    }

    pub fn num_integer(&self) -> usize {
        self.integer.iter().filter(|&&b| b).count()
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn validate(&self) -> Result<(), MipError> {
        let n = self.num_vars();
        if n == 0 {
            return Err(MipError::Malformed("problem has no variables".into()));
        }
        if self.lower.len() != n || self.upper.len() != n || self.integer.len() != n {
            return Err(MipError::Malformed(format!("bound/integrality vectors must have length {n}")));
        }
        if !self.branch_priority.is_empty() && self.branch_priority.len() != n {
            return Err(MipError::Malformed(format!("branch_priority must be empty or have length {n}")));
        }
        if let Some(j) = self.objective.iter().position(|c| !c.is_finite()) {
            return Err(MipError::Malformed(format!("objective coefficient {j} is not finite")));
        }
        for j in 0..n {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
                return Err(MipError::Malformed(format!("variable {j} has invalid bounds [{lo}, {hi}]")));
            }
        }
        for (i, row) in self.rows.iter().enumerate() {
            if !row.rhs.is_finite() {
                return Err(MipError::Malformed(format!("row {i} has non-finite rhs")));
            }
            for &(j, a) in &row.coeffs {
                if j >= n {
                    return Err(MipError::Malformed(format!("row {i} references variable {j} out of range")));
                }
                if !a.is_finite() {
                    return Err(MipError::Malformed(format!("row {i} has a non-finite coefficient")));
                }
            }
        }
        Ok(())
    }

    /// Largest constraint or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.violation(x)).fold(0.0, f64::max);
        let bounds =
            (0..self.num_vars()).map(|j| (self.lower[j] - x[j]).max(x[j] - self.upper[j]).max(0.0)).fold(0.0, f64::max);
        rows.max(bounds)
    }

    pub fn max_integrality_violation(&self, x: &[f64]) -> f64 {
        (0..self.num_vars()).filter(|&j| self.integer[j]).map(|j| (x[j] - x[j].round()).abs()).fold(0.0, f64::max)
    }

    /// True when `x` satisfies every row and bound within `feas_tol` and every
    /// integer variable within `int_tol`.
    pub fn is_feasible(&self, x: &[f64], feas_tol: f64, int_tol: f64) -> bool {
        x.len() == self.num_vars() && self.max_violation(x) <= feas_tol && self.max_integrality_violation(x) <= int_tol
    }
}
