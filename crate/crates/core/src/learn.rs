//! Regression from instance features to representative-scenario labels:
//! ridge linear regression in closed form and a ReLU feed-forward network
//! trained with momentum mini-batch gradient descent.
//!
//! Both models share one representation: a stack of dense layers applied to
//! standardized features. The loss is the mean squared error over all label
//! entries.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::DatasetRow;

/// Ridge used when the unregularized normal equations are singular.
pub const FALLBACK_RIDGE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("not enough data: {0}")]
    Data(String),
    #[error("linear system is singular even with ridge {0}")]
    Singular(f64),
    #[error("training diverged at epoch {epoch}, step {step} (loss {loss})")]
    Divergence { epoch: usize, step: usize, loss: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Seeded shuffle of `count` items into train/val/test; the first
/// `round(train * count)` shuffled positions train, the next `round(val * count)` validate.
pub fn assign_splits(count: usize, train: f64, val: f64, seed: u64) -> Result<Vec<Split>, LearnError> {
    if !(train > 0.0 && val >= 0.0 && train + val <= 1.0) {
        return Err(LearnError::Config(format!("bad split fractions {train}/{val}")));
    }
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (train * count as f64).round() as usize;
    let n_val = ((val * count as f64).round() as usize).min(count - n_train.min(count));
    let mut out = vec![Split::Test; count];
    for (rank, &k) in order.iter().enumerate() {
        if rank < n_train {
            out[k] = Split::Train;
        } else if rank < n_train + n_val {
            out[k] = Split::Val;
        }
    }
    Ok(out)
}

/// Per-feature affine map to zero mean and unit variance. Constant features
/// get scale 1, so they map to 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Standardizer { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    pub fn fit(rows: &[&[f64]]) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        let m = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (a, v) in mean.iter_mut().zip(*r) {
                *a += v;
            }
        }
        mean.iter_mut().for_each(|a| *a /= m);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), mu) in var.iter_mut().zip(*r).zip(&mean) {
                *s += (v - mu) * (v - mu);
            }
        }
        let scale = var.iter().map(|s| (s / m).sqrt()).map(|sd| if sd > 1e-12 { sd } else { 1.0 }).collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.mean).zip(&self.scale).map(|((v, m), s)| (v - m) / s).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub features: Vec<f64>,
    pub label: Vec<f64>,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub input_dim: usize,
    pub output_dim: usize,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(rows: Vec<DatasetRow>, splits: &[Split]) -> Result<Self, LearnError> {
        if rows.len() != splits.len() {
            return Err(LearnError::Dimension(format!("{} rows but {} split labels", rows.len(), splits.len())));
        }
        let first = rows.first().ok_or_else(|| LearnError::Data("empty dataset".into()))?;
        let (input_dim, output_dim) = (first.features.len(), first.label.len());
        let mut examples = Vec::with_capacity(rows.len());
        for (r, &split) in rows.into_iter().zip(splits) {
            if r.features.len() != input_dim || r.label.len() != output_dim {
                return Err(LearnError::Dimension(format!("row {} has a different shape", r.instance_id)));
            }
            if r.features.iter().chain(&r.label).any(|v| !v.is_finite()) {
                return Err(LearnError::Data(format!("row {} has non-finite values", r.instance_id)));
            }
            examples.push(Example { id: r.instance_id, features: r.features, label: r.label, split });
        }
        Ok(Dataset { input_dim, output_dim, examples })
    }

    pub fn part(&self, split: Split) -> Vec<&Example> {
        self.examples.iter().filter(|e| e.split == split).collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.examples.iter().filter(|e| e.split == split).count()
    }

    /// Standardizer fitted on the training split only.
    pub fn fit_standardizer(&self) -> Standardizer {
        let rows: Vec<&[f64]> = self.part(Split::Train).iter().map(|e| e.features.as_slice()).collect();
        Standardizer::fit(&rows)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Lr,
    Ann,
}

/// Dense layer `out = W x + b` with `W` stored row-major as `rows x cols`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Layer { rows, cols, weights: vec![0.0; rows * cols], bias: vec![0.0; rows] }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.cols)
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub ridge: f64,
    pub seed: u64,
    pub train_mse: f64,
    pub val_mse: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Hidden widths; ReLU after every hidden layer, identity output.
    pub hidden: Vec<usize>,
    pub layers: Vec<Layer>,
    pub normalization: Standardizer,
    pub metadata: TrainingMetadata,
}

/// Output of [`predict`]: values clamped at zero and how many were clamped.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub values: Vec<f64>,
    pub clamped: usize,
}

impl Model {
    /// A network of zero-weight layers with the given widths.
    pub fn zeros(kind: ModelKind, input_dim: usize, hidden: &[usize], output_dim: usize) -> Self {
        let mut widths = vec![input_dim];
        widths.extend_from_slice(hidden);
        widths.push(output_dim);
        Model {
            kind,
            input_dim,
            output_dim,
            hidden: hidden.to_vec(),
            layers: widths.windows(2).map(|w| Layer::zeros(w[1], w[0])).collect(),
            normalization: Standardizer::identity(input_dim),
            metadata: TrainingMetadata::default(),
        }
    }

    pub fn validate(&self) -> Result<(), LearnError> {
        let mut widths = vec![self.input_dim];
        widths.extend_from_slice(&self.hidden);
        widths.push(self.output_dim);
        let ok = self.layers.len() + 1 == widths.len()
            && self.layers.iter().zip(widths.windows(2)).all(|(l, w)| {
                l.cols == w[0] && l.rows == w[1] && l.weights.len() == w[0] * w[1] && l.bias.len() == w[1]
            })
            && self.normalization.mean.len() == self.input_dim
            && self.normalization.scale.len() == self.input_dim;
        if ok {
            Ok(())
        } else {
            Err(LearnError::Dimension("parameter shapes do not match the architecture".into()))
        }
    }

    /// Forward pass on already standardized input, without clamping.
    pub fn forward(&self, z: &[f64]) -> Vec<f64> {
        let last = self.layers.len() - 1;
        let mut a = z.to_vec();
        for (k, layer) in self.layers.iter().enumerate() {
            a = layer.forward(&a);
            if k < last {
                a.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        a
    }

    /// Forward pass on raw features, without clamping.
    pub fn raw_output(&self, features: &[f64]) -> Vec<f64> {
        self.forward(&self.normalization.apply(features))
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.num_params());
        let mut k = 0;
        for l in &mut self.layers {
            let (w, b) = (l.weights.len(), l.bias.len());
            l.weights.copy_from_slice(&p[k..k + w]);
            l.bias.copy_from_slice(&p[k + w..k + w + b]);
            k += w + b;
        }
    }

    /// Mean squared error and its gradient (in [`Model::params`] order) on
    /// standardized inputs `zs`.
    pub fn loss_and_gradient(&self, zs: &[&[f64]], ys: &[&[f64]]) -> (f64, Vec<f64>) {
        let scale = 1.0 / (zs.len() * self.output_dim) as f64;
        let mut grads: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.rows, l.cols)).collect();
        let mut loss = 0.0;
        let last = self.layers.len() - 1;
        for (z, y) in zs.iter().zip(ys) {
            let mut acts = vec![z.to_vec()];
            for (k, layer) in self.layers.iter().enumerate() {
                let mut a = layer.forward(acts.last().unwrap());
                if k < last {
                    a.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                acts.push(a);
            }
            let mut delta: Vec<f64> = acts[last + 1].iter().zip(*y).map(|(p, t)| p - t).collect();
            loss += delta.iter().map(|d| d * d).sum::<f64>();
            delta.iter_mut().for_each(|d| *d *= 2.0 * scale);
            for k in (0..=last).rev() {
                let (layer, g, input) = (&self.layers[k], &mut grads[k], &acts[k]);
                for (r, d) in delta.iter().enumerate() {
                    g.bias[r] += d;
                    for (gw, a) in g.weights[r * layer.cols..(r + 1) * layer.cols].iter_mut().zip(input) {
                        *gw += d * a;
                    }
                }
                if k > 0 {
                    let mut back = vec![0.0; layer.cols];
                    for (r, d) in delta.iter().enumerate() {
                        for (b, w) in back.iter_mut().zip(&layer.weights[r * layer.cols..(r + 1) * layer.cols]) {
                            *b += d * w;
                        }
                    }
                    for (b, a) in back.iter_mut().zip(input) {
                        if *a <= 0.0 {
                            *b = 0.0;
                        }
                    }
                    delta = back;
                }
            }
        }
        let mut flat = Vec::with_capacity(self.num_params());
        for g in grads {
            flat.extend(g.weights);
            flat.extend(g.bias);
        }
        (loss * scale, flat)
    }

    pub fn from_json_str(s: &str) -> Result<Self, LearnError> {
        let m: Model = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn read_json(path: &Path) -> Result<Self, LearnError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<(), LearnError> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

pub fn predict(model: &Model, features: &[f64]) -> Result<Prediction, LearnError> {
    if features.len() != model.input_dim {
        return Err(LearnError::Dimension(format!(
            "model expects {} features, got {}",
            model.input_dim,
            features.len()
        )));
    }
    let raw = model.raw_output(features);
    let clamped = raw.iter().filter(|v| **v < 0.0).count();
    Ok(Prediction { values: raw.into_iter().map(|v| v.max(0.0)).collect(), clamped })
}

/// Mean squared error of the unclamped output over `examples`; `NaN` when empty.
pub fn mse(model: &Model, examples: &[&Example]) -> f64 {
    let total: f64 = examples
        .iter()
        .map(|e| model.raw_output(&e.features).iter().zip(&e.label).map(|(p, t)| (p - t) * (p - t)).sum::<f64>())
        .sum();
    total / (examples.len() * model.output_dim) as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
}

pub fn write_log(path: &Path, rows: &[LogRow]) -> Result<(), LearnError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<LogRow>, LearnError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrConfig {
    /// Ridge on the weights (the bias is not penalized), in standardized units.
    pub ridge: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig { ridge: 0.0 }
    }
}

fn check_training_set(ds: &Dataset, min: usize) -> Result<(), LearnError> {
    let n = ds.count(Split::Train);
    if n < min {
        return Err(LearnError::Data(format!("need at least {min} training examples, have {n}")));
    }
    Ok(())
}

/// Closed-form ridge regression on standardized features.
pub fn train_lr(ds: &Dataset, cfg: &LrConfig) -> Result<(Model, Vec<LogRow>), LearnError> {
    if !(cfg.ridge >= 0.0) || !cfg.ridge.is_finite() {
        return Err(LearnError::Config("ridge must be finite and >= 0".into()));
    }
    check_training_set(ds, 2)?;
    let train = ds.part(Split::Train);
    let norm = ds.fit_standardizer();
    let d = ds.input_dim;
    let x = DMatrix::from_fn(train.len(), d + 1, |r, c| {
        if c == d {
            1.0
        } else {
            (train[r].features[c] - norm.mean[c]) / norm.scale[c]
        }
    });
    let y = DMatrix::from_fn(train.len(), ds.output_dim, |r, c| train[r].label[c]);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &y;
    let solve = |ridge: f64| {
        let mut a = xtx.clone();
        for k in 0..d {
            a[(k, k)] += ridge;
        }
        a.cholesky().map(|ch| ch.solve(&xty))
    };
    let (beta, ridge) = match solve(cfg.ridge) {
        Some(b) => (b, cfg.ridge),
        None => {
            let r = cfg.ridge.max(FALLBACK_RIDGE);
            log::debug!("normal equations singular; retrying with ridge {r}");
            (solve(r).ok_or(LearnError::Singular(r))?, r)
        }
    };
    let mut model = Model::zeros(ModelKind::Lr, d, &[], ds.output_dim);
    let layer = &mut model.layers[0];
    for o in 0..ds.output_dim {
        for k in 0..d {
            layer.weights[o * d + k] = beta[(k, o)];
        }
        layer.bias[o] = beta[(d, o)];
    }
    model.normalization = norm;
    let (train_mse, val_mse) = (mse(&model, &train), mse(&model, &ds.part(Split::Val)));
    model.metadata = TrainingMetadata { ridge, train_mse, val_mse, ..Default::default() };
    Ok((model, vec![LogRow { epoch: 0, train_mse, val_mse }]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping.
    pub patience: usize,
    /// Learning rate is multiplied by `decay_factor` every `decay_every` epochs.
    pub decay_factor: f64,
    pub decay_every: usize,
    pub seed: u64,
}

impl Default for AnnConfig {
    fn default() -> Self {
        AnnConfig {
            hidden: vec![64, 32],
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 32,
            max_epochs: 500,
            patience: 20,
            decay_factor: 0.5,
            decay_every: 100,
            seed: 0,
        }
    }
}

impl AnnConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |m: &str| Err(LearnError::Config(m.to_string()));
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be finite and >= 0");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.decay_every == 0 {
            return bad("batch_size, max_epochs and decay_every must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad("decay_factor must lie in (0, 1]");
        }
        Ok(())
    }
}

/// He-normal weights and zero biases.
fn init_params(model: &mut Model, rng: &mut ChaCha8Rng) {
    for l in &mut model.layers {
        let normal = Normal::new(0.0, (2.0 / l.cols as f64).sqrt()).expect("positive std");
        l.weights.iter_mut().for_each(|w| *w = normal.sample(rng));
    }
}

/// Momentum mini-batch gradient descent with step decay and early stopping;
/// returns the parameters with the best validation MSE (training MSE when
/// there is no validation split).
pub fn train_ann(ds: &Dataset, cfg: &AnnConfig) -> Result<(Model, Vec<LogRow>), LearnError> {
    cfg.validate()?;
    check_training_set(ds, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::zeros(ModelKind::Ann, ds.input_dim, &cfg.hidden, ds.output_dim);
    init_params(&mut model, &mut rng);
    model.normalization = ds.fit_standardizer();
    let train = ds.part(Split::Train);
    let val = ds.part(Split::Val);
    let zs: Vec<Vec<f64>> = train.iter().map(|e| model.normalization.apply(&e.features)).collect();
    let score = |m: &Model| if val.is_empty() { mse(m, &train) } else { mse(m, &val) };

    let mut params = model.params();
    let mut velocity = vec![0.0; params.len()];
    let mut best = (score(&model), params.clone(), 0usize);
    let mut log = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut step = 0;
    for epoch in 1..=cfg.max_epochs {
        let lr = cfg.learning_rate * cfg.decay_factor.powi(((epoch - 1) / cfg.decay_every) as i32);
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            let bz: Vec<&[f64]> = batch.iter().map(|&k| zs[k].as_slice()).collect();
            let by: Vec<&[f64]> = batch.iter().map(|&k| train[k].label.as_slice()).collect();
            let (loss, grad) = model.loss_and_gradient(&bz, &by);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(LearnError::Divergence { epoch, step, loss });
            }
            for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v - lr * g;
                *p += *v;
            }
            model.set_params(&params);
        }
        let train_mse = mse(&model, &train);
        let val_mse = if val.is_empty() { f64::NAN } else { mse(&model, &val) };
        if !train_mse.is_finite() {
            return Err(LearnError::Divergence { epoch, step, loss: train_mse });
        }
        log.push(LogRow { epoch, train_mse, val_mse });
        let s = if val.is_empty() { train_mse } else { val_mse };
        if s < best.0 {
            best = (s, params.clone(), epoch);
        } else if epoch - best.2 >= cfg.patience {
            break;
        }
    }
    model.set_params(&best.1);
    model.metadata = TrainingMetadata {
        epochs: log.len(),
        learning_rate: cfg.learning_rate,
        momentum: cfg.momentum,
        batch_size: cfg.batch_size,
        ridge: 0.0,
        seed: cfg.seed,
        train_mse: mse(&model, &train),
        val_mse: if val.is_empty() { f64::NAN } else { mse(&model, &val) },
    };
    Ok((model, log))
}
