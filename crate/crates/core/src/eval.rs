//! Experiment harness: exact reference solves, scenario baselines, learned
//! predictors, and the comparison statistics built from them.
//!
//! Every reported objective is `Phi(x)` recomputed from the produced
//! first-stage point, never a solver's own objective.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cflp::{demand_scenario, CflpInstance};
use crate::features::{extract_features, FeatureError};
use crate::learn::{predict, LearnError, Model};
use crate::mip::{self, MipError, MipStatus, SolverConfig};
use crate::model::{build_extensive_form, evaluate_ovf, solve_surrogate, ModelError, TwoStageInstance};
use crate::rs_search::{generate_xi_hat, ExactReference, RsError, RsLabel, RsSearchConfig};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Invalid(String),
    #[error("instance {0}: exact solve ended without an incumbent")]
    NoIncumbent(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Mip(#[from] MipError),
    #[error(transparent)]
    Search(#[from] RsError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Grb,
    Avg,
    Rnd,
    Dist,
    Lr,
    Ann,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::Grb, Method::Avg, Method::Rnd, Method::Dist, Method::Lr, Method::Ann];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Grb => "GRB",
            Method::Avg => "AVG",
            Method::Rnd => "RND",
            Method::Dist => "DIST",
            Method::Lr => "LR",
            Method::Ann => "ANN",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Method::ALL.into_iter().find(|m| m.as_str().eq_ignore_ascii_case(s))
    }
}

/// How DIST draws its scenario around the LR prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistMode {
    /// Component `j` ~ Poisson(max(0, LR prediction_j)).
    #[default]
    Poisson,
    /// Component `j` drawn uniformly from the LR predictions of component `j`
    /// over the evaluated instance set.
    Empirical,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    pub instance_id: String,
    /// `Phi(x)`.
    pub objective: f64,
    pub time_s: f64,
    pub feature_time_s: f64,
    pub predict_time_s: f64,
    pub solve_time_s: f64,
    pub x: Vec<f64>,
    /// Demand vector handed to the surrogate; empty for GRB.
    pub scenario: Vec<f64>,
    /// Prediction components clamped at zero.
    pub clamped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactRun {
    pub result: MethodResult,
    pub status: MipStatus,
    /// Incumbent value of the extensive form.
    pub solver_objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
    /// `(seconds, objective)` per incumbent improvement.
    pub trajectory: Vec<(f64, f64)>,
}

/// Solves the extensive form. An ended-without-incumbent solve is an error
/// the caller can log and skip.
pub fn run_exact(id: &str, ts: &TwoStageInstance, cfg: &SolverConfig) -> Result<ExactRun, EvalError> {
    let ef = build_extensive_form(ts)?;
    let start = Instant::now();
    let sol = mip::solve_mip(&ef, cfg)?;
    let time_s = start.elapsed().as_secs_f64();
    if !sol.has_incumbent() {
        return Err(EvalError::NoIncumbent(id.to_string()));
    }
    let x = sol.x[..ts.n1()].to_vec();
    let objective = evaluate_ovf(ts, &x)?;
    Ok(ExactRun {
        result: MethodResult {
            method: Method::Grb,
            instance_id: id.to_string(),
            objective,
            time_s,
            feature_time_s: 0.0,
            predict_time_s: 0.0,
            solve_time_s: time_s,
            x,
            scenario: Vec::new(),
            clamped: 0,
        },
        status: sol.status,
        solver_objective: sol.best_objective,
        best_bound: sol.best_bound,
        gap: sol.gap,
        nodes: sol.nodes,
        trajectory: sol.incumbent_trajectory,
    })
}

/// Solves the surrogate for `xi` and evaluates its decision; `feature_time_s`
/// and `predict_time_s` are added to the reported wall time.
pub fn run_surrogate(
    id: &str,
    method: Method,
    ts: &TwoStageInstance,
    n: usize,
    xi: &[f64],
    cfg: &SolverConfig,
    feature_time_s: f64,
    predict_time_s: f64,
) -> Result<MethodResult, EvalError> {
    if xi.len() != n || xi.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(EvalError::Invalid(format!("{id}: scenario must have {n} finite nonnegative entries")));
    }
    let scenario = demand_scenario(ts, n, xi);
    let start = Instant::now();
    let x = solve_surrogate(ts, &scenario, cfg)?;
    let solve_time_s = start.elapsed().as_secs_f64();
    let objective = evaluate_ovf(ts, &x)?;
    Ok(MethodResult {
        method,
        instance_id: id.to_string(),
        objective,
        time_s: feature_time_s + predict_time_s + solve_time_s,
        feature_time_s,
        predict_time_s,
        solve_time_s,
        x,
        scenario: xi.to_vec(),
        clamped: 0,
    })
}

/// Column means of the scenario demands.
pub fn avg_scenario(inst: &CflpInstance) -> Vec<f64> {
    inst.mean_demand()
}

/// One scenario drawn uniformly from the instance's scenarios.
pub fn rnd_scenario(inst: &CflpInstance, seed: u64) -> Vec<f64> {
    let s = ChaCha8Rng::seed_from_u64(seed).random_range(0..inst.m);
    inst.demand[s].iter().map(|&d| f64::from(d)).collect()
}

/// DIST draw around `prediction`; `pool` holds LR predictions for the
/// empirical mode.
pub fn dist_scenario(prediction: &[f64], mode: DistMode, pool: &[Vec<f64>], seed: u64) -> Result<Vec<f64>, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        DistMode::Poisson => Ok(prediction
            .iter()
            .map(|&mu| match Poisson::new(mu) {
                Ok(p) if mu > 0.0 => p.sample(&mut rng),
                _ => 0.0,
            })
            .collect()),
        DistMode::Empirical => {
            if pool.is_empty() || pool.iter().any(|p| p.len() != prediction.len()) {
                return Err(EvalError::Invalid("empirical DIST needs a pool of LR predictions".into()));
            }
            Ok((0..prediction.len()).map(|j| pool[rng.random_range(0..pool.len())][j].max(0.0)).collect())
        }
    }
}

/// Learned-predictor timing split: features, prediction, and the clamped output.
pub struct TimedPrediction {
    pub values: Vec<f64>,
    pub clamped: usize,
    pub feature_time_s: f64,
    pub predict_time_s: f64,
}

pub fn timed_prediction(inst: &CflpInstance, model: &Model) -> Result<TimedPrediction, EvalError> {
    let t = Instant::now();
    let f = extract_features(inst)?;
    let feature_time_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let p = predict(model, &f.values)?;
    let predict_time_s = t.elapsed().as_secs_f64();
    Ok(TimedPrediction { values: p.values, clamped: p.clamped, feature_time_s, predict_time_s })
}

/// LR or ANN: features, prediction and surrogate solve, each timed.
pub fn run_ml(
    id: &str,
    method: Method,
    inst: &CflpInstance,
    ts: &TwoStageInstance,
    model: &Model,
    cfg: &SolverConfig,
) -> Result<MethodResult, EvalError> {
    let p = timed_prediction(inst, model)?;
    let mut r = run_surrogate(id, method, ts, inst.n, &p.values, cfg, p.feature_time_s, p.predict_time_s)?;
    r.clamped = p.clamped;
    Ok(r)
}

/// `(method - grb) / grb`.
pub fn diff_ratio(method_obj: f64, grb_obj: f64) -> Result<f64, EvalError> {
    if !(grb_obj > 0.0) {
        return Err(EvalError::Invalid(format!("reference objective {grb_obj} is not positive")));
    }
    Ok((method_obj - grb_obj) / grb_obj)
}

/// Earliest time at which the incumbent is `<= target`; `None` when never reached.
pub fn grb_time_to_quality(trajectory: &[(f64, f64)], target: f64) -> Option<f64> {
    trajectory.iter().find(|(_, obj)| *obj <= target).map(|(t, _)| *t)
}

/// Summary statistics; the standard deviation is the population form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

/// Statistics over `values` in sorted order, so the result does not depend on
/// input order. `None` when empty.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mean = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
    Some(Summary { min: v[0], max: v[n - 1], mean, median, std: var.sqrt() })
}

/// Exact run, then the representative-scenario search seeded by its decision.
pub fn label_instance(
    id: &str,
    inst: &CflpInstance,
    ts: &TwoStageInstance,
    exact_cfg: &SolverConfig,
    rs_cfg: &RsSearchConfig,
    surrogate_cfg: &SolverConfig,
) -> Result<(ExactRun, RsLabel), EvalError> {
    let exact = run_exact(id, ts, exact_cfg)?;
    let reference = ExactReference { objective: exact.result.objective, x: exact.result.x.clone() };
    let label = generate_xi_hat(ts, inst.n, &inst.mean_demand(), &reference, rs_cfg, surrogate_cfg)?;
    Ok((exact, label))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub method: String,
    pub count: usize,
    pub summary: Summary,
    /// Entries that never reached their target (GRB-L / GRB-A only); they
    /// enter the statistics at the full solve time, a lower bound.
    pub censored: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub instances: usize,
    /// Objective difference ratio to GRB, in percent, per non-GRB method.
    pub diff_ratio_pct: Vec<MethodStats>,
    /// Wall time in seconds per method, plus GRB-L and GRB-A.
    pub time_s: Vec<MethodStats>,
}

impl ComparisonReport {
    pub fn diff(&self, method: Method) -> Option<&MethodStats> {
        self.diff_ratio_pct.iter().find(|s| s.method == method.as_str())
    }

    pub fn time(&self, name: &str) -> Option<&MethodStats> {
        self.time_s.iter().find(|s| s.method == name)
    }
}

/// Groups results by method, checking every method covers the same instances.
fn group(results: &[MethodResult]) -> Result<BTreeMap<Method, BTreeMap<&str, &MethodResult>>, EvalError> {
    let mut by: BTreeMap<Method, BTreeMap<&str, &MethodResult>> = BTreeMap::new();
    for r in results {
        if by.entry(r.method).or_default().insert(&r.instance_id, r).is_some() {
            return Err(EvalError::Invalid(format!("duplicate {} result for {}", r.method.as_str(), r.instance_id)));
        }
    }
    let grb = by.get(&Method::Grb).ok_or_else(|| EvalError::Invalid("no GRB results".into()))?;
    let ids: BTreeSet<&str> = grb.keys().copied().collect();
    for (m, rs) in &by {
        if rs.keys().copied().collect::<BTreeSet<_>>() != ids {
            return Err(EvalError::Invalid(format!("{} covers a different instance set than GRB", m.as_str())));
        }
    }
    Ok(by)
}

/// Table-style statistics over a common instance set. `trajectories` maps
/// instance ids to GRB incumbent trajectories for GRB-L / GRB-A.
pub fn build_report(
    results: &[MethodResult],
    trajectories: &BTreeMap<String, Vec<(f64, f64)>>,
) -> Result<ComparisonReport, EvalError> {
    let by = group(results)?;
    let grb = &by[&Method::Grb];
    let mut diff_ratio_pct = Vec::new();
    let mut time_s = Vec::new();
    for (&m, rs) in &by {
        let times: Vec<f64> = rs.values().map(|r| r.time_s).collect();
        let summary = summarize(&times).expect("nonempty");
        time_s.push(MethodStats { method: m.as_str().into(), count: rs.len(), summary, censored: 0 });
        if m == Method::Grb {
            continue;
        }
        let diffs = rs
            .values()
            .map(|r| diff_ratio(r.objective, grb[r.instance_id.as_str()].objective).map(|d| 100.0 * d))
            .collect::<Result<Vec<_>, _>>()?;
        let summary = summarize(&diffs).expect("nonempty");
        diff_ratio_pct.push(MethodStats { method: m.as_str().into(), count: rs.len(), summary, censored: 0 });
    }
    for (m, name) in [(Method::Lr, "GRB-L"), (Method::Ann, "GRB-A")] {
        let Some(rs) = by.get(&m) else { continue };
        let mut censored = 0;
        let mut times = Vec::with_capacity(rs.len());
        for (id, r) in rs {
            let traj =
                trajectories.get(*id).ok_or_else(|| EvalError::Invalid(format!("no GRB trajectory for {id}")))?;
            match grb_time_to_quality(traj, r.objective) {
                Some(t) => times.push(t),
                None => {
                    censored += 1;
                    times.push(grb[id].time_s);
                }
            }
        }
        let summary = summarize(&times).expect("nonempty");
        time_s.push(MethodStats { method: name.into(), count: rs.len(), summary, censored });
    }
    Ok(ComparisonReport { instances: grb.len(), diff_ratio_pct, time_s })
}

fn write_stats(path: &Path, stats: &[MethodStats]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "count", "min", "max", "avg", "median", "std", "censored"])?;
    for s in stats {
        let m = &s.summary;
        w.write_record([
            s.method.clone(),
            s.count.to_string(),
            format!("{:?}", m.min),
            format!("{:?}", m.max),
            format!("{:?}", m.mean),
            format!("{:?}", m.median),
            format!("{:?}", m.std),
            s.censored.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Counts per bin `[k * width, (k + 1) * width)` from zero to the largest value.
pub fn histogram(values: &[f64], width: f64, bins: usize) -> Vec<usize> {
    let mut counts = vec![0; bins];
    for &v in values {
        let k = ((v.max(0.0) / width).floor() as usize).min(bins.saturating_sub(1));
        if bins > 0 {
            counts[k] += 1;
        }
    }
    counts
}

/// Writes `table1_diff_ratio.csv`, `table2_time.csv`, `fig1_scatter.csv` and
/// one `hist_<METHOD>.csv` per scenario-based method (plus `hist_RS.csv`
/// for `labels` when given).
pub fn write_report(
    dir: &Path,
    report: &ComparisonReport,
    results: &[MethodResult],
    labels: &[Vec<f64>],
    bin_width: f64,
) -> Result<(), EvalError> {
    if !(bin_width > 0.0) {
        return Err(EvalError::Invalid("histogram bin width must be positive".into()));
    }
    std::fs::create_dir_all(dir)?;
    write_stats(&dir.join("table1_diff_ratio.csv"), &report.diff_ratio_pct)?;
    write_stats(&dir.join("table2_time.csv"), &report.time_s)?;
    let mut w = csv::Writer::from_path(dir.join("fig1_scatter.csv"))?;
    w.write_record(["method", "avg_time_s", "avg_diff_ratio_pct"])?;
    for d in &report.diff_ratio_pct {
        let t = report.time(&d.method).expect("every method has times");
        w.write_record([d.method.clone(), format!("{:?}", t.summary.mean), format!("{:?}", d.summary.mean)])?;
    }
    w.flush()?;

    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in results.iter().filter(|r| r.method != Method::Grb) {
        values.entry(r.method.as_str().into()).or_default().extend(&r.scenario);
    }
    if !labels.is_empty() {
        values.insert("RS".into(), labels.iter().flatten().copied().collect());
    }
    let top = values.values().flatten().copied().fold(0.0, f64::max);
    let bins = (top / bin_width).floor() as usize + 1;
    for (name, vals) in &values {
        let mut w = csv::Writer::from_path(dir.join(format!("hist_{name}.csv")))?;
        w.write_record(["bin_lo", "bin_hi", "count"])?;
        for (k, c) in histogram(vals, bin_width, bins).into_iter().enumerate() {
            w.write_record([
                format!("{:?}", k as f64 * bin_width),
                format!("{:?}", (k + 1) as f64 * bin_width),
                c.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(";")
}

fn split_floats(s: &str) -> Result<Vec<f64>, EvalError> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(';').map(|t| t.parse().map_err(|_| EvalError::Invalid(format!("bad number {t:?}")))).collect()
}

/// One row per method x instance; vectors are `;`-joined.
pub fn write_results(path: &Path, results: &[MethodResult]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "instance_id",
        "method",
        "objective",
        "time_s",
        "feature_time_s",
        "predict_time_s",
        "solve_time_s",
        "clamped",
        "x",
        "scenario",
    ])?;
    for r in results {
        w.write_record([
            r.instance_id.clone(),
            r.method.as_str().into(),
            format!("{:?}", r.objective),
            format!("{:?}", r.time_s),
            format!("{:?}", r.feature_time_s),
            format!("{:?}", r.predict_time_s),
            format!("{:?}", r.solve_time_s),
            r.clamped.to_string(),
            join(&r.x),
            join(&r.scenario),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<MethodResult>, EvalError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 10 {
            return Err(EvalError::Invalid(format!("results row has {} fields", rec.len())));
        }
        let num = |k: usize| rec[k].parse::<f64>().map_err(|_| EvalError::Invalid(format!("bad number {:?}", &rec[k])));
        out.push(MethodResult {
            instance_id: rec[0].to_string(),
            method: Method::parse(&rec[1])
                .ok_or_else(|| EvalError::Invalid(format!("unknown method {:?}", &rec[1])))?,
            objective: num(2)?,
            time_s: num(3)?,
            feature_time_s: num(4)?,
            predict_time_s: num(5)?,
            solve_time_s: num(6)?,
            clamped: rec[7].parse().map_err(|_| EvalError::Invalid("bad clamp count".into()))?,
            x: split_floats(&rec[8])?,
            scenario: split_floats(&rec[9])?,
        });
    }
    Ok(out)
}
