//! Representative-scenario search: starting from the mean demand, repeatedly
//! solve the surrogate, evaluate its first-stage decision on the full
//! scenario set, and perturb the demand vector until the decision is within
//! a factor of the reference objective.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cflp::{demand_scenario, split_first_stage, Layout};
use crate::mip::{solve_mip, SolverConfig};
use crate::model::{build_surrogate, evaluate_ovf_detailed, ModelError, Scenario, TwoStageInstance};

const EQUAL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RsError {
    #[error("invalid search config: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Zero-demand first; if it changes nothing, percent on odd iterations
    /// and difference on even ones. A location's capacity disagreement moves
    /// the demand of the client it serves most in the surrogate solution.
    /// Revisited points are skipped; when no fresh point remains, or the
    /// best point has not improved for `STALL_LIMIT` iterations, the search
    /// restarts from the best point with halved steps.
    ZeroThenAlternate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RsSearchConfig {
    pub max_iterations: usize,
    pub acceptance: f64,
    pub percent_step: f64,
    pub difference_fraction: f64,
    pub schedule: Schedule,
    pub seed: u64,
}

impl Default for RsSearchConfig {
    fn default() -> Self {
        RsSearchConfig {
            max_iterations: 200,
            acceptance: 1.01,
            percent_step: 0.1,
            difference_fraction: 0.05,
            schedule: Schedule::ZeroThenAlternate,
            seed: 0,
        }
    }
}

impl RsSearchConfig {
    pub fn validate(&self) -> Result<(), RsError> {
        if !(self.acceptance > 1.0) {
            return Err(RsError::Config("acceptance factor must exceed 1".into()));
        }
        if !(self.percent_step > 0.0 && self.percent_step < 1.0) {
            return Err(RsError::Config("percent_step must lie in (0, 1)".into()));
        }
        if !(self.difference_fraction > 0.0) || !self.difference_fraction.is_finite() {
            return Err(RsError::Config("difference_fraction must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(RsError::Config("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// Objective and first-stage decision of the reference solve.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactReference {
    pub objective: f64,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RsLabel {
    /// The accepted demand vector, or the best one tried when none was accepted.
    pub xi_star: Vec<f64>,
    pub achieved_ovf: f64,
    pub reference_ovf: f64,
    pub iterations_used: usize,
    pub found: bool,
}

/// Zeroes `xi_i` wherever the reference keeps location `i` closed and the surrogate opens it.
pub fn heuristic_zero_demand(xi: &[f64], b_star: &[f64], b_surr: &[f64]) -> Vec<f64> {
    xi.iter()
        .zip(b_star.iter().zip(b_surr))
        .map(|(&d, (&bs, &bb))| if bs < 0.5 && bb >= 0.5 { 0.0 } else { d })
        .collect()
}

/// Index of the largest capacity disagreement, lowest index on ties; `None` if all agree.
pub fn capacity_argmax(v_star: &[f64], v_surr: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, (a, b)) in v_star.iter().zip(v_surr).enumerate() {
        let d = (a - b).abs();
        if d > EQUAL_TOL && best.is_none_or(|(_, bd)| d > bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Moves the most disagreeing component by `p` of its value toward the
/// reference capacity; `None` when the capacities agree.
pub fn heuristic_percent(xi: &[f64], v_star: &[f64], v_surr: &[f64], p: f64) -> Option<Vec<f64>> {
    let i = capacity_argmax(v_star, v_surr)?;
    let mut out = xi.to_vec();
    out[i] += (v_star[i] - v_surr[i]).signum() * p * xi[i];
    Some(out)
}

/// Moves the most disagreeing component by `f * (v*_i - v_i) * xi_i`,
/// clamped at zero; `None` when the capacities agree.
pub fn heuristic_difference(xi: &[f64], v_star: &[f64], v_surr: &[f64], f: f64) -> Option<Vec<f64>> {
    let i = capacity_argmax(v_star, v_surr)?;
    let mut out = xi.to_vec();
    out[i] = (xi[i] + (v_star[i] - v_surr[i]) * f * xi[i]).max(0.0);
    Some(out)
}

/// Locations ordered by decreasing capacity disagreement, lowest index first on ties.
pub fn disagreement_order(v_star: &[f64], v_surr: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v_star.len()).filter(|&i| (v_star[i] - v_surr[i]).abs() > EQUAL_TOL).collect();
    idx.sort_by(|&a, &b| {
        let (da, db) = ((v_star[a] - v_surr[a]).abs(), (v_star[b] - v_surr[b]).abs());
        db.total_cmp(&da).then(a.cmp(&b))
    });
    idx
}

/// One search step. Zero-demand first (when `allow_zero`); otherwise the
/// iteration's rule, with `p` and `f` multiplied by `scale`, is applied for
/// the most disagreeing location whose client `client_of[i]` can actually move.
fn perturb(
    xi: &[f64],
    x_ref: &[f64],
    x_surr: &[f64],
    iteration: usize,
    cap: f64,
    scale: f64,
    allow_zero: bool,
    client_of: &[usize],
    cfg: &RsSearchConfig,
) -> Option<Vec<f64>> {
    let n = xi.len();
    let (b_star, v_star) = split_first_stage(x_ref, n);
    let (b_surr, v_surr) = split_first_stage(x_surr, n);
    if allow_zero {
        let zeroed = heuristic_zero_demand(xi, &b_star, &b_surr);
        if zeroed != xi {
            return Some(zeroed);
        }
    }
    for i in disagreement_order(&v_star, &v_surr) {
        let diff = v_star[i] - v_surr[i];
        let j = client_of[i];
        let moved = if iteration % 2 == 1 {
            xi[j] + diff.signum() * scale * cfg.percent_step * xi[j]
        } else {
            (xi[j] + diff * scale * cfg.difference_fraction * xi[j]).max(0.0)
        };
        let moved = moved.min(cap);
        if moved != xi[j] {
            let mut next = xi.to_vec();
            next[j] = moved;
            return Some(next);
        }
    }
    None
}

fn key(xi: &[f64]) -> Vec<u64> {
    xi.iter().map(|v| v.to_bits()).collect()
}

/// Smallest step multiplier; below it the steps reset to full size.
pub const MIN_STEP_SCALE: f64 = 1.0 / 64.0;

/// Solves the surrogate; returns its first stage and, per location, the
/// client it ships the most to (the location's own index when it ships nothing).
fn surrogate_with_clients(
    ts: &TwoStageInstance,
    n: usize,
    xi: &Scenario,
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, Vec<usize>), ModelError> {
    let sol = solve_mip(&build_surrogate(ts, xi)?, cfg)?;
    if !sol.has_incumbent() {
        return Err(ModelError::Surrogate(sol.status));
    }
    let (n1, lay) = (ts.n1(), Layout { n, shortfall: false });
    let client_of = (0..n)
        .map(|i| {
            let ship = |j: usize| sol.x[n1 + lay.y(i, j)];
            (0..n)
                .filter(|&j| ship(j) > EQUAL_TOL)
                .max_by(|&a, &b| ship(a).total_cmp(&ship(b)).then(b.cmp(&a)))
                .unwrap_or(i)
        })
        .collect();
    Ok((sol.x[..n1].to_vec(), client_of))
}

/// An evaluated search point.
struct Point {
    xi: Vec<f64>,
    ovf: f64,
    x: Vec<f64>,
    client_of: Vec<usize>,
}

/// Iterations without a new best point before the search restarts from it.
pub const STALL_LIMIT: usize = 8;

/// Largest total demand over the scenarios of a lowered instance. Perturbed
/// components are capped here: no facility can be built beyond it.
pub fn demand_cap(ts: &TwoStageInstance, n: usize) -> f64 {
    let lay = Layout { n, shortfall: false };
    ts.scenarios.iter().map(|s| (0..n).map(|j| s.h[lay.demand_row(j)]).sum::<f64>()).fold(0.0, f64::max)
}

/// Searches for a demand vector whose surrogate decision `x` satisfies
/// `Phi(x) <= acceptance * reference.objective`.
///
/// `ts` must be a lowered facility-location instance with `n` locations and
/// `n` clients; `surrogate_cfg` is used for the surrogate and recourse solves.
pub fn generate_xi_hat(
    ts: &TwoStageInstance,
    n: usize,
    start: &[f64],
    reference: &ExactReference,
    cfg: &RsSearchConfig,
    surrogate_cfg: &SolverConfig,
) -> Result<RsLabel, RsError> {
    cfg.validate()?;
    if ts.n1() != 2 * n || start.len() != n || reference.x.len() != 2 * n {
        return Err(RsError::Dimension(format!(
            "expected a square instance with {n} locations and clients (first stage {}, start {}, reference {})",
            ts.n1(),
            start.len(),
            reference.x.len()
        )));
    }
    let threshold = cfg.acceptance * reference.objective;
    let cap = demand_cap(ts, n).max(start.iter().copied().fold(0.0, f64::max));
    let mut xi = start.to_vec();
    let mut visited = HashSet::new();
    let mut best: Option<Point> = None;
    let mut scale = 1.0;
    let mut iterations_used = 0;
    let mut since_best = 0;
    'search: for it in 1..=cfg.max_iterations {
        iterations_used = it;
        visited.insert(key(&xi));
        let scenario = demand_scenario(ts, n, &xi);
        let (x, client_of) = surrogate_with_clients(ts, n, &scenario, surrogate_cfg)?;
        let ovf = evaluate_ovf_detailed(ts, &x, surrogate_cfg)?.value;
        if ovf <= threshold {
            return Ok(RsLabel {
                xi_star: xi,
                achieved_ovf: ovf,
                reference_ovf: reference.objective,
                iterations_used: it,
                found: true,
            });
        }
        if best.as_ref().is_none_or(|b| ovf < b.ovf) {
            best = Some(Point { xi: xi.clone(), ovf, x: x.clone(), client_of: client_of.clone() });
            since_best = 0;
        } else {
            since_best += 1;
        }
        if it == cfg.max_iterations {
            break;
        }
        // Fresh, unvisited candidates only; when the current point offers
        // none, or the search has stalled, restart from the best point with
        // smaller steps.
        let (mut cur_xi, mut cur_x, mut cur_c) = (xi.clone(), x, client_of);
        if since_best >= STALL_LIMIT {
            since_best = 0;
            let b = best.as_ref().expect("set above");
            (cur_xi, cur_x, cur_c) = (b.xi.clone(), b.x.clone(), b.client_of.clone());
            scale = if scale / 2.0 < MIN_STEP_SCALE { 1.0 } else { scale / 2.0 };
        }
        loop {
            let fresh = [true, false].into_iter().find_map(|zero| {
                perturb(&cur_xi, &reference.x, &cur_x, it, cap, scale, zero, &cur_c, cfg)
                    .filter(|c| !visited.contains(&key(c)))
            });
            if let Some(next) = fresh {
                xi = next;
                continue 'search;
            }
            let b = best.as_ref().expect("set above");
            if cur_xi != b.xi {
                (cur_xi, cur_x, cur_c) = (b.xi.clone(), b.x.clone(), b.client_of.clone());
            } else if scale / 2.0 >= MIN_STEP_SCALE {
                scale /= 2.0;
            } else {
                break 'search;
            }
        }
    }
    let best = best.expect("at least one iteration");
    Ok(RsLabel {
        xi_star: best.xi,
        achieved_ovf: best.ovf,
        reference_ovf: reference.objective,
        iterations_used,
        found: false,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabelRow {
    pub instance_id: String,
    pub label: RsLabel,
}

pub fn write_labels(path: &Path, rows: &[LabelRow]) -> Result<(), RsError> {
    let mut w = csv::Writer::from_path(path)?;
    let n = rows.first().map_or(0, |r| r.label.xi_star.len());
    let mut header = vec!["instance_id".to_string(), "found".into(), "iterations".into()];
    header.extend((0..n).map(|i| format!("xi_star_{i}")));
    header.extend(["achieved_ovf".to_string(), "reference_ovf".into()]);
    w.write_record(&header)?;
    for r in rows {
        let l = &r.label;
        if l.xi_star.len() != n {
            return Err(RsError::Dimension("labels with different lengths".into()));
        }
        let mut rec = vec![r.instance_id.clone(), l.found.to_string(), l.iterations_used.to_string()];
        rec.extend(l.xi_star.iter().map(|v| format!("{v:?}")));
        rec.extend([format!("{:?}", l.achieved_ovf), format!("{:?}", l.reference_ovf)]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: &Path) -> Result<Vec<LabelRow>, RsError> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    let n = header.len().checked_sub(5).ok_or_else(|| RsError::Dimension("label header too short".into()))?;
    let bad = |m: &str| RsError::Dimension(m.to_string());
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |k: usize| rec[k].parse::<f64>().map_err(|_| bad("unparsable number in labels"));
        let found = rec[1].parse::<bool>().map_err(|_| bad("unparsable found flag"))?;
        let iterations_used = rec[2].parse::<usize>().map_err(|_| bad("unparsable iteration count"))?;
        let xi_star = (0..n).map(|i| num(3 + i)).collect::<Result<_, _>>()?;
        out.push(LabelRow {
            instance_id: rec[0].to_string(),
            label: RsLabel { xi_star, achieved_ovf: num(3 + n)?, reference_ovf: num(4 + n)?, iterations_used, found },
        });
    }
    Ok(out)
}
