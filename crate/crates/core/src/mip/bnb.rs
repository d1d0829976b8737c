//! LP-based branch and bound.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::time::Instant;

use super::problem::{MipProblem, RowSense};
use super::simplex::{LpStatus, RangeRow, Simplex};
use super::{MipSolution, MipStatus, SolverConfig, FEAS_TOL, INT_TOL};

/// Integer variables within this distance of an integer count as integral
/// during the search; accepted incumbents are snapped and re-checked at `INT_TOL`.
const BRANCH_INT_TOL: f64 = 1e-6;
const HEURISTIC_PERIOD: usize = 64;
const MAX_IMPROVE_STEPS: usize = 1000;

pub(crate) fn gap_of(objective: f64, bound: f64) -> f64 {
    if !objective.is_finite() {
        return f64::INFINITY;
    }
    if !bound.is_finite() {
        return f64::INFINITY;
    }
    (objective - bound).abs() / objective.abs().max(1e-10)
}

/// The presolved LP form: singleton rows folded into bounds, and rows with an
/// identical (or negated) coefficient pattern merged into one ranged row.
pub(crate) struct Presolved {
    pub rows: Vec<RangeRow>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

pub(crate) fn presolve(p: &MipProblem) -> Option<Presolved> {
    let n = p.num_vars();
    let mut lo = p.lower.clone();
    let mut hi = p.upper.clone();
    let mut rows: Vec<RangeRow> = Vec::new();
    let mut seen: HashMap<Vec<(usize, u64)>, usize> = HashMap::new();

    for row in &p.rows {
        let mut coeffs: Vec<(usize, f64)> = Vec::with_capacity(row.coeffs.len());
        for &(j, a) in &row.coeffs {
            if a == 0.0 {
                continue;
            }
            match coeffs.iter_mut().find(|(k, _)| *k == j) {
                Some(e) => e.1 += a,
                None => coeffs.push((j, a)),
            }
        }
        coeffs.retain(|&(_, a)| a != 0.0);
        coeffs.sort_by_key(|&(j, _)| j);
        let (mut rlo, mut rhi) = match row.sense {
            RowSense::Le => (f64::NEG_INFINITY, row.rhs),
            RowSense::Ge => (row.rhs, f64::INFINITY),
            RowSense::Eq => (row.rhs, row.rhs),
        };
        if coeffs.is_empty() {
            if rlo > FEAS_TOL || rhi < -FEAS_TOL {
                return None;
            }
            continue;
        }
        if coeffs.len() == 1 {
            let (j, a) = coeffs[0];
            let (mut blo, mut bhi) = (rlo / a, rhi / a);
            if a < 0.0 {
                std::mem::swap(&mut blo, &mut bhi);
            }
            lo[j] = lo[j].max(blo);
            hi[j] = hi[j].min(bhi);
            continue;
        }
        // normalize sign so the first coefficient is positive
        if coeffs[0].1 < 0.0 {
            for c in coeffs.iter_mut() {
                c.1 = -c.1;
            }
            let t = rlo;
            rlo = -rhi;
            rhi = -t;
        }
        let key: Vec<(usize, u64)> = coeffs.iter().map(|&(j, a)| (j, a.to_bits())).collect();
        match seen.get(&key) {
            Some(&idx) => {
                let r = &mut rows[idx];
                r.lo = r.lo.max(rlo);
                r.hi = r.hi.min(rhi);
            }
            None => {
                seen.insert(key, rows.len());
                rows.push(RangeRow { coeffs, lo: rlo, hi: rhi });
            }
        }
    }
    for j in 0..n {
        if p.integer[j] {
            lo[j] = (lo[j] - BRANCH_INT_TOL).ceil();
            hi[j] = (hi[j] + BRANCH_INT_TOL).floor();
        }
        if lo[j] > hi[j] + FEAS_TOL {
            return None;
        }
        if lo[j] > hi[j] {
            let mid = 0.5 * (lo[j] + hi[j]);
            lo[j] = mid;
            hi[j] = mid;
        }
    }
    if rows.iter().any(|r| r.lo > r.hi + FEAS_TOL) {
        return None;
    }
    Some(Presolved { rows, lo, hi })
}

#[derive(Debug)]
struct Node {
    bound: f64,
    seq: u64,
    changes: Vec<(usize, f64, f64)>,
    /// Heuristics already ran at an ancestor whose top-priority variables were integral.
    top_done: bool,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: smallest bound first, then oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    problem: &'a MipProblem,
    lp: Simplex,
    root_lo: Vec<f64>,
    root_hi: Vec<f64>,
    int_vars: Vec<usize>,
    lp_limit: usize,
    start: Instant,
    incumbent: Option<(f64, Vec<f64>)>,
    trajectory: Vec<(f64, f64)>,
    /// Original rows by column, for the integer improvement step.
    columns: Vec<Vec<(usize, f64)>>,
}

impl<'a> Search<'a> {
    fn apply(&mut self, changes: &[(usize, f64, f64)]) {
        for &j in &self.int_vars {
            self.lp.set_col_bounds(j, self.root_lo[j], self.root_hi[j]);
        }
        for &(j, lo, hi) in changes {
            self.lp.set_col_bounds(j, lo, hi);
        }
    }

    fn incumbent_value(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v)
    }

    fn prune_tol(&self) -> f64 {
        match &self.incumbent {
            Some((v, _)) => 1e-9 * v.abs().max(1.0),
            None => 0.0,
        }
    }

    /// Fixes every integer variable to `values` (rounded and clamped) and
    /// solves for the continuous part. Offers the result as an incumbent.
    fn try_fixing(&mut self, values: &[f64], round: Rounding) -> bool {
        let (int_vars, problem) = (self.int_vars.clone(), self.problem);
        for &j in &int_vars {
            let (lo, hi) = self.lp.col_bounds(j);
            let v = match round {
                Rounding::Nearest => values[j].round(),
                Rounding::Up => (values[j] - BRANCH_INT_TOL).ceil(),
            };
            let v = v.clamp(lo, hi);
            self.lp.set_col_bounds(j, v, v);
        }
        if self.lp.solve(self.lp_limit) != LpStatus::Optimal {
            return false;
        }
        let mut x = self.lp.primal().to_vec();
        for &j in &int_vars {
            x[j] = x[j].round();
        }
        self.improve_integers(&mut x);
        if !problem.is_feasible(&x, FEAS_TOL, INT_TOL) {
            return false;
        }
        let obj = problem.objective_value(&x);
        if obj < self.incumbent_value() - self.prune_tol() {
            let t = self.start.elapsed().as_secs_f64();
            self.trajectory.push((t, obj));
            self.incumbent = Some((obj, x));
            return true;
        }
        false
    }

    /// Greedy one-step moves of integer variables against their cost
    /// direction while every row and bound stays satisfied.
    fn improve_integers(&self, x: &mut [f64]) {
        let p = self.problem;
        let mut activity: Vec<f64> = p.rows.iter().map(|r| r.activity(x)).collect();
        let mut order: Vec<usize> = self.int_vars.iter().copied().filter(|&j| p.objective[j] != 0.0).collect();
        order.sort_by(|&a, &b| p.objective[b].abs().total_cmp(&p.objective[a].abs()).then(a.cmp(&b)));
        for j in order {
            let step = if p.objective[j] > 0.0 { -1.0 } else { 1.0 };
            for _ in 0..MAX_IMPROVE_STEPS {
                let next = x[j] + step;
                if next < p.lower[j] - 1e-9 || next > p.upper[j] + 1e-9 {
                    break;
                }
                let ok = self.columns[j].iter().all(|&(r, a)| {
                    let act = activity[r] + step * a;
                    let row = &p.rows[r];
                    let tol = 1e-9 * row.rhs.abs().max(1.0);
                    match row.sense {
                        RowSense::Le => act <= row.rhs + tol,
                        RowSense::Ge => act >= row.rhs - tol,
                        RowSense::Eq => (act - row.rhs).abs() <= tol,
                    }
                });
                if !ok {
                    break;
                }
                for &(r, a) in &self.columns[j] {
                    activity[r] += step * a;
                }
                x[j] = next;
            }
        }
    }

    fn run_heuristics(&mut self, x: &[f64], changes: &[(usize, f64, f64)]) {
        self.try_fixing(x, Rounding::Nearest);
        self.apply(changes);
        self.try_fixing(x, Rounding::Up);
        self.apply(changes);
    }
}

#[derive(Clone, Copy)]
enum Rounding {
    Nearest,
    Up,
}

pub(crate) fn branch_and_bound(problem: &MipProblem, cfg: &SolverConfig) -> MipSolution {
    let start = Instant::now();
    let mut sol = MipSolution::empty(MipStatus::Infeasible);
    let Some(pre) = presolve(problem) else {
        return sol;
    };
    let n = problem.num_vars();
    let m = pre.rows.len();
    let lp = Simplex::new(&problem.objective, pre.rows, &pre.lo, &pre.hi);
    let int_vars: Vec<usize> = (0..n).filter(|&j| problem.integer[j]).collect();
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (i, r) in problem.rows.iter().enumerate() {
        for &(j, a) in &r.coeffs {
            if problem.integer[j] && a != 0.0 {
                columns[j].push((i, a));
            }
        }
    }
    let priority = |j: usize| problem.branch_priority.get(j).copied().unwrap_or(0);
    let top_priority = int_vars.iter().map(|&j| priority(j)).max().unwrap_or(0);
    let mut search = Search {
        problem,
        lp,
        root_lo: pre.lo,
        root_hi: pre.hi,
        int_vars,
        lp_limit: 50 * (n + m) + 1000,
        start,
        incumbent: None,
        trajectory: Vec::new(),
        columns,
    };

    let mut heap: BinaryHeap<Node> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut current = Some(Node { bound: f64::NEG_INFINITY, seq, changes: Vec::new(), top_done: false });
    // bound of nodes dropped for numerical reasons; keeps best_bound valid
    let mut lost_bound = f64::INFINITY;
    let mut nodes = 0usize;
    let mut branchings = 0usize;
    let mut status = MipStatus::Optimal;
    let mut root_unbounded = false;

    loop {
        let node = match current.take() {
            Some(nd) => nd,
            None => match heap.pop() {
                Some(nd) => nd,
                None => break,
            },
        };
        let open_bound = heap.peek().map_or(f64::INFINITY, |nd| nd.bound).min(node.bound);
        let inc = search.incumbent_value();
        if node.bound >= inc - search.prune_tol() {
            continue;
        }
        if inc.is_finite() && gap_of(inc, open_bound.min(lost_bound)) <= cfg.gap_limit {
            heap.push(node);
            status = MipStatus::GapLimit;
            break;
        }
        if start.elapsed().as_secs_f64() >= cfg.time_limit || cfg.node_limit.is_some_and(|lim| nodes >= lim) {
            heap.push(node);
            status = MipStatus::TimeLimit;
            break;
        }
        nodes += 1;
        search.apply(&node.changes);
        match search.lp.solve(search.lp_limit) {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => {
                if node.changes.is_empty() {
                    root_unbounded = true;
                    break;
                }
                lost_bound = f64::NEG_INFINITY;
                continue;
            }
            LpStatus::IterationLimit => {
                log::warn!("LP iteration limit at node {nodes}; node dropped");
                lost_bound = lost_bound.min(node.bound);
                continue;
            }
        }
        let z = search.lp.objective();
        if z >= search.incumbent_value() - search.prune_tol() {
            continue;
        }
        let x = search.lp.primal().to_vec();
        // highest priority, then most fractional, then lowest index
        let mut branch_var = usize::MAX;
        let mut best_key = (0u32, BRANCH_INT_TOL);
        for &j in &search.int_vars {
            let f = x[j] - x[j].floor();
            let dist = f.min(1.0 - f);
            if dist <= BRANCH_INT_TOL {
                continue;
            }
            let pr = priority(j);
            if branch_var == usize::MAX || pr > best_key.0 || (pr == best_key.0 && dist > best_key.1 + 1e-12) {
                best_key = (pr, dist);
                branch_var = j;
            }
        }
        if branch_var == usize::MAX {
            search.try_fixing(&x, Rounding::Nearest);
            continue;
        }
        let top_integral = best_key.0 < top_priority;
        if nodes == 1 || nodes.is_multiple_of(HEURISTIC_PERIOD) || (top_integral && !node.top_done) {
            search.run_heuristics(&x, &node.changes);
            if z >= search.incumbent_value() - search.prune_tol() {
                continue;
            }
        }
        branchings += 1;
        let v = x[branch_var];
        let (lo, hi) = search.lp.col_bounds(branch_var);
        let mut down = node.changes.clone();
        down.push((branch_var, lo, v.floor()));
        let mut up = node.changes;
        up.push((branch_var, v.ceil(), hi));
        seq += 1;
        let down = Node { bound: z, seq, changes: down, top_done: top_integral };
        seq += 1;
        let up = Node { bound: z, seq, changes: up, top_done: top_integral };
        // plunge toward the nearer integer
        let (first, second) = if v - v.floor() >= 0.5 { (up, down) } else { (down, up) };
        heap.push(second);
        current = Some(first);
    }

    sol.nodes = nodes;
    sol.branchings = branchings;
    sol.lp_iterations = search.lp.iterations();
    sol.incumbent_trajectory = search.trajectory;
    if root_unbounded {
        sol.status = MipStatus::Unbounded;
        sol.best_objective = f64::NEG_INFINITY;
        sol.best_bound = f64::NEG_INFINITY;
        sol.gap = f64::INFINITY;
        return sol;
    }
    let open_bound = heap.iter().map(|nd| nd.bound).fold(f64::INFINITY, f64::min).min(lost_bound);
    match search.incumbent {
        Some((obj, x)) => {
            let bound = open_bound.min(obj);
            sol.best_objective = obj;
            sol.best_bound = bound;
            sol.gap = gap_of(obj, bound);
            sol.x = x;
            sol.status = if sol.gap <= 1e-6 {
                MipStatus::Optimal
            } else if status == MipStatus::Optimal {
                MipStatus::GapLimit
            } else {
                status
            };
        }
        None => {
            sol.best_objective = f64::INFINITY;
            sol.best_bound = open_bound;
            sol.gap = f64::INFINITY;
            sol.status = if status == MipStatus::TimeLimit { MipStatus::TimeLimit } else { MipStatus::Infeasible };
        }
    }
    sol
}
