//! Fixed-length instance features: raw facility costs, per-client demand
//! statistics over the scenarios, and per-client dominance fractions.
//!
//! Block order is `c_f[n]`, `c_v[n]`, `stats[7n]`, `dominance_ge[5n]`,
//! `dominance_le[5n]`. Statistics and dominance blocks are client-major.
//! Standard deviations use the population form; quantiles interpolate
//! linearly between order statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cflp::CflpInstance;

pub const DOMINANCE_FACTORS: [f64; 5] = [0.9, 1.0, 1.1, 1.2, 1.5];
pub const STAT_NAMES: [&str; 7] = ["min", "max", "mean", "std", "median", "q75", "q25"];
pub const FEATURES_PER_CLIENT: usize = 2 + STAT_NAMES.len() + 2 * DOMINANCE_FACTORS.len();

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub n: usize,
}

impl FeatureLayout {
    pub fn len(&self) -> usize {
        FEATURES_PER_CLIENT * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `(block name, offset, length)` in vector order.
    pub fn blocks(&self) -> Vec<(&'static str, usize, usize)> {
        let n = self.n;
        let k = DOMINANCE_FACTORS.len();
        vec![
            ("c_f", 0, n),
            ("c_v", n, n),
            ("stats", 2 * n, 7 * n),
            ("dominance_ge", 9 * n, k * n),
            ("dominance_le", (9 + k) * n, k * n),
        ]
    }

    pub fn names(&self) -> Vec<String> {
        let n = self.n;
        let mut out = Vec::with_capacity(self.len());
        out.extend((0..n).map(|i| format!("c_f_{i}")));
        out.extend((0..n).map(|i| format!("c_v_{i}")));
        for i in 0..n {
            out.extend(STAT_NAMES.iter().map(|s| format!("{s}_{i}")));
        }
        for side in ["ge", "le"] {
            for i in 0..n {
                out.extend(DOMINANCE_FACTORS.iter().map(|c| format!("{side}_{c:.1}_{i}")));
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: FeatureLayout,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The seven column statistics in [`STAT_NAMES`] order.
pub fn column_stats(column: &[f64]) -> [f64; 7] {
    let m = column.len() as f64;
    let mut sorted = column.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = column.iter().sum::<f64>() / m;
    let var = column.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / m;
    [
        sorted[0],
        sorted[sorted.len() - 1],
        mean,
        var.sqrt(),
        quantile(&sorted, 0.5),
        quantile(&sorted, 0.75),
        quantile(&sorted, 0.25),
    ]
}

/// Fractions of rows where `c * row[i] >= row[j]` (and `<=`) for every `j != i`.
pub fn dominance_fractions(demand: &[Vec<f64>], i: usize, c: f64) -> (f64, f64) {
    let (mut ge, mut le) = (0usize, 0usize);
    for row in demand {
        let lhs = c * row[i];
        let others = row.iter().enumerate().filter(|&(j, _)| j != i);
        if others.clone().all(|(_, &d)| lhs >= d) {
            ge += 1;
        }
        if others.clone().all(|(_, &d)| lhs <= d) {
            le += 1;
        }
    }
    let m = demand.len() as f64;
    (ge as f64 / m, le as f64 / m)
}

pub fn extract_from_parts(c_f: &[f64], c_v: &[f64], demand: &[Vec<f64>]) -> Result<FeatureVector, FeatureError> {
    let n = c_f.len();
    if c_v.len() != n || demand.is_empty() || demand.iter().any(|r| r.len() != n) {
        return Err(FeatureError::Dimension(format!(
            "need c_f, c_v of length {n} and a nonempty demand matrix with {n} columns"
        )));
    }
    let layout = FeatureLayout { n };
    let mut values = Vec::with_capacity(layout.len());
    values.extend_from_slice(c_f);
    values.extend_from_slice(c_v);
    let mut column = vec![0.0; demand.len()];
    for i in 0..n {
        for (s, row) in demand.iter().enumerate() {
            column[s] = row[i];
        }
        values.extend(column_stats(&column));
    }
    let fractions: Vec<Vec<(f64, f64)>> =
        (0..n).map(|i| DOMINANCE_FACTORS.iter().map(|&c| dominance_fractions(demand, i, c)).collect()).collect();
    values.extend(fractions.iter().flatten().map(|f| f.0));
    values.extend(fractions.iter().flatten().map(|f| f.1));
    Ok(FeatureVector { values, layout })
}

pub fn extract_features(inst: &CflpInstance) -> Result<FeatureVector, FeatureError> {
    extract_from_parts(&inst.c_f, &inst.c_v, &inst.demand_f64())
}

/// One dataset row: identifier, features, and the label vector.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRow {
    pub instance_id: String,
    pub features: Vec<f64>,
    pub label: Vec<f64>,
}

pub fn write_dataset(path: &Path, layout: FeatureLayout, rows: &[DatasetRow]) -> Result<(), FeatureError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["instance_id".to_string()];
    header.extend(layout.names());
    header.extend((0..layout.n).map(|i| format!("xi_star_{i}")));
    w.write_record(&header)?;
    for r in rows {
        if r.features.len() != layout.len() || r.label.len() != layout.n {
            return Err(FeatureError::Dimension(format!("row {} does not match the layout", r.instance_id)));
        }
        let mut rec = vec![r.instance_id.clone()];
        rec.extend(r.features.iter().chain(&r.label).map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<(FeatureLayout, Vec<DatasetRow>), FeatureError> {
    let mut r = csv::Reader::from_path(path)?;
    let cols = r.headers()?.len();
    if cols < 1 || (cols - 1) % (FEATURES_PER_CLIENT + 1) != 0 {
        return Err(FeatureError::Dimension(format!("dataset has {cols} columns")));
    }
    let layout = FeatureLayout { n: (cols - 1) / (FEATURES_PER_CLIENT + 1) };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let nums: Vec<f64> = rec
            .iter()
            .skip(1)
            .map(|s| s.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| FeatureError::Dimension(format!("unparsable number in row {}", &rec[0])))?;
        let (features, label) = nums.split_at(layout.len());
        rows.push(DatasetRow { instance_id: rec[0].to_string(), features: features.to_vec(), label: label.to_vec() });
    }
    Ok((layout, rows))
}
