//! Stochastic capacitated facility location: instance data, the random
//! generator, and lowering into a [`TwoStageInstance`].
//!
//! Lowered column layout, for `n` locations:
//! first stage `x = (b_0..b_{n-1}, v_0..v_{n-1})`;
//! second stage `y = (u_ij, y_ij, z_j)` with `u` and `y` flattened row-major
//! (`i` facility, `j` client) and the optional shortfall columns `z` last.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{DenseMatrix, ModelError, Scenario, TwoStageInstance};
use crate::seeds::derive_seed;

#[derive(Debug, Error)]
pub enum CflpError {
    #[error("invalid generator config: {0}")]
    Config(String),
    #[error("invalid instance: {0}")]
    Instance(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CflpInstance {
    pub n: usize,
    pub m: usize,
    pub c_f: Vec<f64>,
    pub c_v: Vec<f64>,
    pub c_tf: Vec<Vec<f64>>,
    pub c_tv: Vec<Vec<f64>>,
    /// `m` scenarios by `n` clients.
    pub demand: Vec<Vec<u32>>,
    pub seed: u64,
}

/// Half-open integer range `[lo, hi)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntRange {
    pub lo: i64,
    pub hi: i64,
}

impl IntRange {
    pub const fn new(lo: i64, hi: i64) -> Self {
        IntRange { lo, hi }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        rng.random_range(self.lo..self.hi) as f64
    }

    fn check(&self, name: &str) -> Result<(), CflpError> {
        if self.lo >= self.hi || self.lo < 0 {
            return Err(CflpError::Config(format!("{name} must be a nonempty nonnegative range")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n: usize,
    pub m: usize,
    pub c_f_range: IntRange,
    pub c_v_range: IntRange,
    pub c_tf_range: IntRange,
    pub c_tv_range: IntRange,
    pub transport_seed: u64,
    pub count: usize,
    /// Adds shortfall columns to the lowered model; `false` keeps the plain
    /// formulation.
    pub shortfall: bool,
    /// Per-unit cost of unmet demand when `shortfall` is set.
    pub shortfall_penalty: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            n: 5,
            m: 20,
            c_f_range: IntRange::new(15, 20),
            c_v_range: IntRange::new(5, 10),
            c_tf_range: IntRange::new(5, 10),
            c_tv_range: IntRange::new(1, 5),
            transport_seed: 2718,
            count: 2000,
            shortfall: true,
            shortfall_penalty: DEFAULT_SHORTFALL_PENALTY,
        }
    }
}

pub const DEFAULT_SHORTFALL_PENALTY: f64 = 50.0;

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), CflpError> {
        if self.n < 2 {
            return Err(CflpError::Config("n must be at least 2 for the cardinality bounds to be satisfiable".into()));
        }
        if self.m == 0 {
            return Err(CflpError::Config("m must be at least 1".into()));
        }
        self.c_f_range.check("c_f_range")?;
        self.c_v_range.check("c_v_range")?;
        self.c_tf_range.check("c_tf_range")?;
        self.c_tv_range.check("c_tv_range")?;
        if !(self.shortfall_penalty.is_finite() && self.shortfall_penalty > 0.0) {
            return Err(CflpError::Config("shortfall_penalty must be positive".into()));
        }
        Ok(())
    }

    /// The penalty argument of [`to_two_stage`].
    pub fn penalty(&self) -> Option<f64> {
        self.shortfall.then_some(self.shortfall_penalty)
    }
}

/// `floor((c_f + 10 c_v) / sqrt(n))` computed in integers: the largest `k`
/// with `k^2 n <= (c_f + 10 c_v)^2`.
pub fn poisson_mean(c_f: u64, c_v: u64, n: u64) -> u64 {
    let a = c_f + 10 * c_v;
    let target = a * a;
    let mut k = ((a as f64) / (n as f64).sqrt()) as u64;
    while k * k * n > target {
        k -= 1;
    }
    while (k + 1) * (k + 1) * n <= target {
        k += 1;
    }
    k
}

/// Transport costs shared by every instance of a configuration.
pub fn transport_costs(cfg: &GeneratorConfig) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.transport_seed);
    let n = cfg.n;
    let c_tf = (0..n).map(|_| (0..n).map(|_| cfg.c_tf_range.sample(&mut rng)).collect()).collect();
    let c_tv = (0..n).map(|_| (0..n).map(|_| cfg.c_tv_range.sample(&mut rng)).collect()).collect();
    (c_tf, c_tv)
}

pub fn generate_instance(cfg: &GeneratorConfig, seed: u64) -> Result<CflpInstance, CflpError> {
    cfg.validate()?;
    let (c_tf, c_tv) = transport_costs(cfg);
    Ok(generate_with_transport(cfg, seed, c_tf, c_tv))
}

fn generate_with_transport(cfg: &GeneratorConfig, seed: u64, c_tf: Vec<Vec<f64>>, c_tv: Vec<Vec<f64>>) -> CflpInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.n;
    let c_f: Vec<f64> = (0..n).map(|_| cfg.c_f_range.sample(&mut rng)).collect();
    let c_v: Vec<f64> = (0..n).map(|_| cfg.c_v_range.sample(&mut rng)).collect();
    let lambda: Vec<u64> = (0..n).map(|i| poisson_mean(c_f[i] as u64, c_v[i] as u64, n as u64)).collect();
    let dists: Vec<Option<Poisson<f64>>> =
        lambda.iter().map(|&l| if l == 0 { None } else { Poisson::new(l as f64).ok() }).collect();
    let demand = (0..cfg.m)
        .map(|_| dists.iter().map(|d| d.as_ref().map_or(0, |d| d.sample(&mut rng) as u32)).collect())
        .collect();
    CflpInstance { n, m: cfg.m, c_f, c_v, c_tf, c_tv, demand, seed }
}

/// `cfg.count` instances; instance `k` uses `derive_seed(root_seed, "instance", k)`.
pub fn generate_batch(cfg: &GeneratorConfig, root_seed: u64) -> Result<Vec<CflpInstance>, CflpError> {
    cfg.validate()?;
    let (c_tf, c_tv) = transport_costs(cfg);
    Ok((0..cfg.count as u64)
        .map(|k| generate_with_transport(cfg, derive_seed(root_seed, "instance", k), c_tf.clone(), c_tv.clone()))
        .collect())
}

pub fn cardinality_bounds(n: usize) -> (usize, usize) {
    (n.div_ceil(10), 3 * n / 4)
}

impl CflpInstance {
    pub fn validate(&self) -> Result<(), CflpError> {
        let bad = |m: String| Err(CflpError::Instance(m));
        let n = self.n;
        if n < 2 || self.m == 0 {
            return bad(format!("need n >= 2 and m >= 1, got n = {n}, m = {}", self.m));
        }
        if self.c_f.len() != n || self.c_v.len() != n {
            return bad("c_f and c_v must have length n".into());
        }
        let square = |mat: &Vec<Vec<f64>>| mat.len() == n && mat.iter().all(|r| r.len() == n);
        if !square(&self.c_tf) || !square(&self.c_tv) {
            return bad("c_tf and c_tv must be n x n".into());
        }
        if self.demand.len() != self.m || self.demand.iter().any(|r| r.len() != n) {
            return bad("demand must be m x n".into());
        }
        let costs =
            self.c_f.iter().chain(&self.c_v).chain(self.c_tf.iter().flatten()).chain(self.c_tv.iter().flatten());
        if costs.clone().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return bad("costs must be finite and nonnegative".into());
        }
        Ok(())
    }

    pub fn demand_f64(&self) -> Vec<Vec<f64>> {
        self.demand.iter().map(|r| r.iter().map(|&d| d as f64).collect()).collect()
    }

    /// Column means of the demand matrix.
    pub fn mean_demand(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.n];
        for row in &self.demand {
            for (a, &d) in mean.iter_mut().zip(row) {
                *a += d as f64;
            }
        }
        mean.iter_mut().for_each(|a| *a /= self.m as f64);
        mean
    }

    pub fn from_json_str(s: &str) -> Result<Self, CflpError> {
        let inst: CflpInstance = serde_json::from_str(s)?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn read_json(path: &Path) -> Result<Self, CflpError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> Result<String, CflpError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<(), CflpError> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }
}

/// Indices into the lowered model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub shortfall: bool,
}

impl Layout {
    pub fn b(&self, i: usize) -> usize {
        i
    }
    pub fn v(&self, i: usize) -> usize {
        self.n + i
    }
    pub fn u(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }
    pub fn y(&self, i: usize, j: usize) -> usize {
        self.n * self.n + i * self.n + j
    }
    pub fn z(&self, j: usize) -> usize {
        2 * self.n * self.n + j
    }
    pub fn n2(&self) -> usize {
        2 * self.n * self.n + if self.shortfall { self.n } else { 0 }
    }
    /// Row of `sum_i y_ij (+ z_j) <= d_j`; the next `n` rows hold the negated copies.
    pub fn demand_row(&self, j: usize) -> usize {
        self.n + j
    }
    pub fn m2(&self) -> usize {
        3 * self.n + 2 * self.n * self.n
    }
}

/// Splits a lowered first-stage point into `(b, v)`.
pub fn split_first_stage(x: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    (x[..n].to_vec(), x[n..2 * n].to_vec())
}

/// Lowers to a two-stage program with uniform scenario probabilities.
///
/// Both link constants (`v_i <= M b_i` and `y_ij <= M u_ij`) are
/// `M = max_s sum_j demand[s][j]`; the recourse matrix is shared by all
/// scenarios, so `M` cannot follow a scenario's demand.
pub fn to_two_stage(inst: &CflpInstance, shortfall_penalty: Option<f64>) -> Result<TwoStageInstance, CflpError> {
    inst.validate()?;
    let n = inst.n;
    let lay = Layout { n, shortfall: shortfall_penalty.is_some() };
    let n1 = 2 * n;
    let (lo, hi) = cardinality_bounds(n);
    let big_m = inst.demand.iter().map(|r| r.iter().map(|&d| d as f64).sum::<f64>()).fold(0.0, f64::max);

    let mut a_rows: Vec<Vec<f64>> = Vec::new();
    let mut b = Vec::new();
    let mut row = |coeffs: &[(usize, f64)], rhs: f64| {
        let mut r = vec![0.0; n1];
        for &(j, c) in coeffs {
            r[j] = c;
        }
        a_rows.push(r);
        b.push(rhs);
    };
    let all_b: Vec<(usize, f64)> = (0..n).map(|i| (lay.b(i), 1.0)).collect();
    let neg_b: Vec<(usize, f64)> = (0..n).map(|i| (lay.b(i), -1.0)).collect();
    row(&neg_b, -(lo as f64));
    row(&all_b, hi as f64);
    for i in 0..n {
        row(&[(lay.v(i), 1.0), (lay.b(i), -big_m)], 0.0);
    }
    for i in 0..n {
        row(&[(lay.b(i), 1.0)], 1.0);
        row(&[(lay.b(i), -1.0)], 0.0);
        row(&[(lay.v(i), -1.0)], 0.0);
    }

    let n2 = lay.n2();
    let m2 = lay.m2();
    let mut w = DenseMatrix::zeros(m2, n2);
    let mut t = DenseMatrix::zeros(m2, n1);
    for i in 0..n {
        for j in 0..n {
            w.set(i, lay.y(i, j), 1.0);
        }
        t.set(i, lay.v(i), -1.0);
    }
    for j in 0..n {
        let (r, rn) = (lay.demand_row(j), lay.demand_row(j) + n);
        for i in 0..n {
            w.set(r, lay.y(i, j), 1.0);
            w.set(rn, lay.y(i, j), -1.0);
        }
        if lay.shortfall {
            w.set(r, lay.z(j), 1.0);
            w.set(rn, lay.z(j), -1.0);
        }
    }
    let link0 = 3 * n;
    let ub0 = 3 * n + n * n;
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            w.set(link0 + k, lay.y(i, j), 1.0);
            w.set(link0 + k, lay.u(i, j), -big_m);
            w.set(ub0 + k, lay.u(i, j), 1.0);
        }
    }

    let mut q = Vec::with_capacity(n2);
    q.extend(inst.c_tf.iter().flatten());
    q.extend(inst.c_tv.iter().flatten());
    if let Some(p) = shortfall_penalty {
        q.extend(std::iter::repeat_n(p, n));
    }
    let prob = 1.0 / inst.m as f64;
    let scenarios = inst
        .demand
        .iter()
        .map(|d| {
            let d: Vec<f64> = d.iter().map(|&v| v as f64).collect();
            Scenario { probability: prob, q: q.clone(), h: recourse_rhs(lay, &d), t: t.clone() }
        })
        .collect();

    let mut c = inst.c_f.clone();
    c.extend(&inst.c_v);
    let ts = TwoStageInstance {
        c,
        a: DenseMatrix::from_rows(a_rows)?,
        b,
        w,
        int_first: (0..n).collect(),
        int_second: (0..n * n).collect(),
        scenarios,
    };
    ts.validate()?;
    Ok(ts)
}

fn recourse_rhs(lay: Layout, d: &[f64]) -> Vec<f64> {
    let n = lay.n;
    let mut h = vec![0.0; lay.m2()];
    for j in 0..n {
        h[lay.demand_row(j)] = d[j];
        h[lay.demand_row(j) + n] = -d[j];
    }
    for k in 0..n * n {
        h[3 * n + n * n + k] = 1.0;
    }
    h
}

/// Scenario of a lowered instance with client demands replaced by `d`.
/// Costs and technology are taken from the first scenario.
pub fn demand_scenario(ts: &TwoStageInstance, n: usize, d: &[f64]) -> Scenario {
    let lay = Layout { n, shortfall: ts.n2() > 2 * n * n };
    let first = &ts.scenarios[0];
    Scenario { probability: 1.0, q: first.q.clone(), h: recourse_rhs(lay, d), t: first.t.clone() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub instance_path: String,
    pub seed: u64,
    pub status: String,
}

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<(), CflpError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>, CflpError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}
