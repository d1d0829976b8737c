//! Bounded-variable simplex on a dense tableau.
//!
//! Every row `i` gets a logical column `s_i = a_i · x` whose bounds carry the
//! row's range, so the system is `A x - s = 0` and the starting basis is the
//! set of logicals. Bound changes never touch the tableau, which lets branch
//! and bound warm-start children from the parent's basis with the dual simplex.

const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DROP_TOL: f64 = 1e-14;
const RESIDUAL_TOL: f64 = 1e-8;
const NONBASIC: usize = usize::MAX;
const DEGENERATE_LIMIT: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// A row of the internal form: `lo <= coeffs · x <= hi`.
#[derive(Clone, Debug)]
pub struct RangeRow {
    pub coeffs: Vec<(usize, f64)>,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Clone)]
pub struct Simplex {
    m: usize,
    n: usize,
    ncols: usize,
    tab: Vec<f64>,
    d: Vec<f64>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    row_of: Vec<usize>,
    rows: Vec<RangeRow>,
    pivot_row_buf: Vec<usize>,
    iterations: usize,
    since_refactor: usize,
}

impl std::fmt::Debug for Simplex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Simplex({} rows, {} structurals, {} pivots)", self.m, self.n, self.iterations)
    }
}

impl Simplex {
    pub fn new(objective: &[f64], rows: Vec<RangeRow>, col_lo: &[f64], col_hi: &[f64]) -> Self {
        let n = objective.len();
        let m = rows.len();
        let ncols = n + m;
        let mut cost = objective.to_vec();
        cost.resize(ncols, 0.0);
        let mut lo = col_lo.to_vec();
        let mut hi = col_hi.to_vec();
        for r in &rows {
            lo.push(r.lo);
            hi.push(r.hi);
        }
        let mut s = Simplex {
            m,
            n,
            ncols,
            tab: Vec::new(),
            d: Vec::new(),
            cost,
            lo,
            hi,
            x: vec![0.0; ncols],
            basis: Vec::new(),
            row_of: Vec::new(),
            rows,
            pivot_row_buf: Vec::new(),
            iterations: 0,
            since_refactor: 0,
        };
        for j in 0..n {
            s.x[j] = initial_value(s.lo[j], s.hi[j]);
        }
        s.reset_tableau();
        s
    }

    fn reset_tableau(&mut self) {
        let (m, n, ncols) = (self.m, self.n, self.ncols);
        self.tab.clear();
        self.tab.resize(m * ncols, 0.0);
        for (i, r) in self.rows.iter().enumerate() {
            let row = &mut self.tab[i * ncols..(i + 1) * ncols];
            for &(j, a) in &r.coeffs {
                row[j] -= a;
            }
            row[n + i] = 1.0;
        }
        self.d = self.cost.clone();
        self.basis = (n..ncols).collect();
        self.row_of = vec![NONBASIC; ncols];
        for i in 0..m {
            self.row_of[n + i] = i;
        }
    }

    pub fn num_structurals(&self) -> usize {
        self.n
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn set_col_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lo[j] = lo;
        self.hi[j] = hi;
    }

    pub fn col_bounds(&self, j: usize) -> (f64, f64) {
        (self.lo[j], self.hi[j])
    }

    pub fn objective(&self) -> f64 {
        (0..self.n).map(|j| self.cost[j] * self.x[j]).sum()
    }

    pub fn primal(&self) -> &[f64] {
        &self.x[..self.n]
    }

    /// Row multipliers: `c_j - sum_i duals_i a_ij` are the structural reduced costs.
    pub fn row_duals(&self) -> Vec<f64> {
        self.d[self.n..].to_vec()
    }

    pub fn reduced_costs(&self) -> &[f64] {
        &self.d[..self.n]
    }

    /// Re-optimizes from the current basis after any bound changes.
    pub fn solve(&mut self, max_iterations: usize) -> LpStatus {
        for attempt in 0..3 {
            self.maybe_refactor();
            let dual_feasible = self.place_nonbasics();
            self.recompute_basics();
            let mut status = if dual_feasible { self.dual_simplex(max_iterations) } else { LpStatus::IterationLimit };
            if status == LpStatus::IterationLimit || status == LpStatus::Optimal {
                // Primal cleans up both the dual-infeasible start and any dual
                // drift left behind by the dual phase.
                status = self.primal_simplex(max_iterations);
            }
            if status == LpStatus::Optimal && self.residual() > RESIDUAL_TOL && attempt < 2 {
                self.refactor();
                continue;
            }
            if status == LpStatus::IterationLimit && attempt < 2 {
                self.refactor();
                continue;
            }
            return status;
        }
        LpStatus::IterationLimit
    }

    fn can_increase(&self, j: usize) -> bool {
        self.x[j] < self.hi[j] - PRIMAL_TOL
    }

    fn can_decrease(&self, j: usize) -> bool {
        self.x[j] > self.lo[j] + PRIMAL_TOL
    }

    /// Moves nonbasic variables to the bound their reduced cost prefers.
    /// Returns false when some variable lacks the needed finite bound.
    fn place_nonbasics(&mut self) -> bool {
        let mut dual_feasible = true;
        for j in 0..self.ncols {
            if self.row_of[j] != NONBASIC {
                continue;
            }
            let (lo, hi, d) = (self.lo[j], self.hi[j], self.d[j]);
            if lo == hi {
                self.x[j] = lo;
            } else if d > DUAL_TOL {
                if lo.is_finite() {
                    self.x[j] = lo;
                } else {
                    dual_feasible = false;
                    self.x[j] = self.x[j].min(hi);
                }
            } else if d < -DUAL_TOL {
                if hi.is_finite() {
                    self.x[j] = hi;
                } else {
                    dual_feasible = false;
                    self.x[j] = self.x[j].max(lo);
                }
            } else {
                let v = self.x[j].clamp(lo, hi);
                self.x[j] = if v.is_finite() { v } else { initial_value(lo, hi) };
            }
        }
        dual_feasible
    }

    fn recompute_basics(&mut self) {
        let ncols = self.ncols;
        for i in 0..self.m {
            let row = &self.tab[i * ncols..(i + 1) * ncols];
            let mut v = 0.0;
            for j in 0..ncols {
                let a = row[j];
                if a != 0.0 && self.row_of[j] == NONBASIC {
                    v -= a * self.x[j];
                }
            }
            self.x[self.basis[i]] = v;
        }
    }

    fn residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, r) in self.rows.iter().enumerate() {
            let act: f64 = r.coeffs.iter().map(|&(j, a)| a * self.x[j]).sum();
            let scale = 1.0 + act.abs();
            worst = worst.max((act - self.x[self.n + i]).abs() / scale);
        }
        worst
    }

    /// Rebuilds the tableau from the original rows for the current basis.
    fn refactor(&mut self) {
        let target: Vec<usize> = self.basis.iter().copied().filter(|&j| j < self.n).collect();
        self.reset_tableau();
        let ncols = self.ncols;
        for q in target {
            let mut best = NONBASIC;
            let mut best_abs = 1e-11;
            for i in 0..self.m {
                let b = self.basis[i];
                if b >= self.n {
                    let a = self.tab[i * ncols + q].abs();
                    if a > best_abs {
                        best_abs = a;
                        best = i;
                    }
                }
            }
            if best != NONBASIC {
                self.pivot(best, q);
            }
        }
        self.since_refactor = 0;
        self.recompute_basics();
    }

    /// Rebuilds the tableau once enough pivots have accumulated rounding error.
    fn maybe_refactor(&mut self) {
        if self.since_refactor > self.m.max(100) {
            self.refactor();
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let ncols = self.ncols;
        let piv = self.tab[r * ncols + q];
        let inv = 1.0 / piv;
        let mut nz = std::mem::take(&mut self.pivot_row_buf);
        nz.clear();
        {
            let row = &mut self.tab[r * ncols..(r + 1) * ncols];
            for (j, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= inv;
                    if v.abs() < DROP_TOL {
                        *v = 0.0;
                    } else {
                        nz.push(j);
                    }
                }
            }
            row[q] = 1.0;
        }
        let (before, rest) = self.tab.split_at_mut(r * ncols);
        let (prow, after) = rest.split_at_mut(ncols);
        for chunk in before.chunks_exact_mut(ncols).chain(after.chunks_exact_mut(ncols)) {
            let f = chunk[q];
            if f == 0.0 {
                continue;
            }
            for &j in &nz {
                let v = chunk[j] - f * prow[j];
                chunk[j] = if v.abs() < DROP_TOL { 0.0 } else { v };
            }
            chunk[q] = 0.0;
        }
        let dq = self.d[q];
        if dq != 0.0 {
            for &j in &nz {
                self.d[j] -= dq * prow[j];
            }
            self.d[q] = 0.0;
        }
        self.pivot_row_buf = nz;
        self.since_refactor += 1;
        let leaving = self.basis[r];
        self.row_of[leaving] = NONBASIC;
        self.basis[r] = q;
        self.row_of[q] = r;
        self.iterations += 1;
    }

    /// Moves nonbasic `q` by `delta`, updating the basic values along its column.
    fn shift_nonbasic(&mut self, q: usize, delta: f64) {
        if delta == 0.0 {
            return;
        }
        self.x[q] += delta;
        let ncols = self.ncols;
        for i in 0..self.m {
            let a = self.tab[i * ncols + q];
            if a != 0.0 {
                self.x[self.basis[i]] -= a * delta;
            }
        }
    }

    fn dual_simplex(&mut self, max_iterations: usize) -> LpStatus {
        let ncols = self.ncols;
        let mut iters = 0;
        let mut degenerate_run = 0usize;
        loop {
            self.maybe_refactor();
            // After a long degenerate run, Bland's rule: smallest basic index
            // leaves, exact ratio test with smallest-index ties.
            let bland = degenerate_run > DEGENERATE_LIMIT;
            let mut r = NONBASIC;
            let mut worst = PRIMAL_TOL;
            let mut target = 0.0;
            for i in 0..self.m {
                let b = self.basis[i];
                let v = self.x[b];
                let below = self.lo[b] - v;
                let above = v - self.hi[b];
                let viol = below.max(above);
                if viol <= PRIMAL_TOL {
                    continue;
                }
                let better = if bland { r == NONBASIC || b < self.basis[r] } else { viol > worst };
                if better {
                    worst = viol;
                    r = i;
                    target = if below > above { self.lo[b] } else { self.hi[b] };
                }
            }
            if r == NONBASIC {
                return LpStatus::Optimal;
            }
            if iters >= max_iterations {
                return LpStatus::IterationLimit;
            }
            iters += 1;
            let delta_sign = if target > self.x[self.basis[r]] { 1.0 } else { -1.0 };
            let row = &self.tab[r * ncols..(r + 1) * ncols];
            let eligible = |j: usize, a: f64| {
                if a.abs() <= PIVOT_TOL || self.row_of[j] != NONBASIC {
                    return false;
                }
                let dir = -delta_sign * a.signum();
                if dir > 0.0 {
                    self.can_increase(j)
                } else {
                    self.can_decrease(j)
                }
            };

            let mut q = NONBASIC;
            if bland {
                let mut best = f64::INFINITY;
                for j in 0..ncols {
                    let a = row[j];
                    if !eligible(j, a) {
                        continue;
                    }
                    let t = self.d[j].abs() / a.abs();
                    if t < best - 1e-12 {
                        best = t;
                        q = j;
                    }
                }
                if q == NONBASIC {
                    return LpStatus::Infeasible;
                }
            } else {
                // Harris two-pass ratio test
                let mut bound = f64::INFINITY;
                for j in 0..ncols {
                    let a = row[j];
                    if !eligible(j, a) {
                        continue;
                    }
                    let t = (self.d[j].abs() + DUAL_TOL) / a.abs();
                    if t < bound {
                        bound = t;
                    }
                }
                if bound == f64::INFINITY {
                    return LpStatus::Infeasible;
                }
                let mut best_abs = 0.0;
                for j in 0..ncols {
                    let a = row[j];
                    if !eligible(j, a) {
                        continue;
                    }
                    if self.d[j].abs() / a.abs() <= bound && a.abs() > best_abs {
                        best_abs = a.abs();
                        q = j;
                    }
                }
            }
            let arq = row[q];
            if self.d[q].abs() / arq.abs() <= DUAL_TOL {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            let leaving = self.basis[r];
            let step = (target - self.x[leaving]) / (-arq);
            self.shift_nonbasic(q, step);
            self.x[leaving] = target;
            self.pivot(r, q);
        }
    }

    fn primal_simplex(&mut self, max_iterations: usize) -> LpStatus {
        let ncols = self.ncols;
        let mut iters = 0;
        let mut degenerate_run = 0usize;
        let mut phase_cost = vec![0.0; self.m];
        let mut d1 = vec![0.0; ncols];
        loop {
            self.maybe_refactor();
            // phase-one costs on infeasible basics
            let mut infeasible = false;
            for i in 0..self.m {
                let b = self.basis[i];
                let v = self.x[b];
                phase_cost[i] = if v < self.lo[b] - PRIMAL_TOL {
                    -1.0
                } else if v > self.hi[b] + PRIMAL_TOL {
                    1.0
                } else {
                    0.0
                };
                infeasible |= phase_cost[i] != 0.0;
            }
            let reduced: &[f64] = if infeasible {
                d1.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..self.m {
                    let c = phase_cost[i];
                    if c != 0.0 {
                        let row = &self.tab[i * ncols..(i + 1) * ncols];
                        for j in 0..ncols {
                            if row[j] != 0.0 {
                                d1[j] -= c * row[j];
                            }
                        }
                    }
                }
                &d1
            } else {
                &self.d
            };

            let bland = degenerate_run > DEGENERATE_LIMIT;
            let mut q = NONBASIC;
            let mut best = 0.0;
            let mut dir = 0.0;
            for j in 0..ncols {
                if self.row_of[j] != NONBASIC {
                    continue;
                }
                let dj = reduced[j];
                let cand = if dj < -DUAL_TOL && self.can_increase(j) {
                    1.0
                } else if dj > DUAL_TOL && self.can_decrease(j) {
                    -1.0
                } else {
                    continue;
                };
                if bland {
                    q = j;
                    dir = cand;
                    break;
                }
                if dj.abs() > best {
                    best = dj.abs();
                    q = j;
                    dir = cand;
                }
            }
            if q == NONBASIC {
                return if infeasible { LpStatus::Infeasible } else { LpStatus::Optimal };
            }
            if iters >= max_iterations {
                return LpStatus::IterationLimit;
            }
            iters += 1;

            // ratio test along x_q = x_q + dir * t
            let mut t_max = if dir > 0.0 { self.hi[q] - self.x[q] } else { self.x[q] - self.lo[q] };
            let mut leave = NONBASIC;
            let mut leave_target = 0.0;
            let mut leave_abs = 0.0;
            for i in 0..self.m {
                let a = self.tab[i * ncols + q];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let v = self.x[b];
                let rate = -a * dir;
                let (limit, tgt) = if rate > 0.0 {
                    if phase_cost[i] < 0.0 && infeasible {
                        ((self.lo[b] - v) / rate, self.lo[b])
                    } else if phase_cost[i] > 0.0 && infeasible {
                        continue;
                    } else {
                        ((self.hi[b] - v) / rate, self.hi[b])
                    }
                } else if phase_cost[i] > 0.0 && infeasible {
                    ((self.hi[b] - v) / rate, self.hi[b])
                } else if phase_cost[i] < 0.0 && infeasible {
                    continue;
                } else {
                    ((self.lo[b] - v) / rate, self.lo[b])
                };
                if !limit.is_finite() {
                    continue;
                }
                let limit = limit.max(0.0);
                if limit < t_max - 1e-12 || (limit <= t_max + 1e-12 && a.abs() > leave_abs) {
                    t_max = limit;
                    leave = i;
                    leave_target = tgt;
                    leave_abs = a.abs();
                }
            }
            if t_max == f64::INFINITY {
                return if infeasible { LpStatus::Infeasible } else { LpStatus::Unbounded };
            }
            if t_max <= PRIMAL_TOL {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.shift_nonbasic(q, dir * t_max);
            if leave == NONBASIC {
                // bound flip
                self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
            } else {
                let leaving = self.basis[leave];
                self.x[leaving] = leave_target;
                self.pivot(leave, q);
            }
        }
    }
}

fn initial_value(lo: f64, hi: f64) -> f64 {
    if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    }
}
