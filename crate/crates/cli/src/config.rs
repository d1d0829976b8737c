//! Run configuration: one TOML file with a section per pipeline stage.

use std::path::{Path, PathBuf};

use repscen::cflp::GeneratorConfig;
use repscen::eval::{DistMode, Method};
use repscen::learn::{AnnConfig, LrConfig};
use repscen::mip::SolverConfig;
use repscen::rs_search::RsSearchConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    /// Extensive-form solves (the GRB role).
    pub exact: SolverConfig,
    /// Surrogate and recourse solves.
    pub surrogate: SolverConfig,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            exact: SolverConfig { gap_limit: 0.02, time_limit: 600.0, node_limit: Some(2500), ..Default::default() },
            surrogate: SolverConfig::exact(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSection {
    /// Keep instances whose search found no representative scenario (their
    /// label is the best scenario tried).
    pub include_unfound: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub lr: LrConfig,
    pub ann: AnnConfig,
}

impl Default for TrainingSection {
    fn default() -> Self {
        TrainingSection { train_fraction: 0.8, val_fraction: 0.1, lr: LrConfig::default(), ann: AnnConfig::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub methods: Vec<Method>,
    pub dist_mode: DistMode,
    pub split: EvalSplit,
    pub histogram_bin_width: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            methods: Method::ALL.to_vec(),
            dist_mode: DistMode::Poisson,
            split: EvalSplit::Test,
            histogram_bin_width: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub generator: GeneratorConfig,
    pub solver: SolverSection,
    pub rs_search: RsSearchConfig,
    pub features: FeatureSection,
    pub training: TrainingSection,
    pub evaluation: EvaluationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out: PathBuf::from("out"),
            generator: GeneratorConfig::default(),
            solver: SolverSection::default(),
            rs_search: RsSearchConfig::default(),
            features: FeatureSection::default(),
            training: TrainingSection::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let cfg = |e: String| CliError::Config(e);
        self.generator.validate().map_err(|e| cfg(e.to_string()))?;
        self.solver.exact.validate().map_err(|e| cfg(format!("solver.exact: {e}")))?;
        self.solver.surrogate.validate().map_err(|e| cfg(format!("solver.surrogate: {e}")))?;
        self.rs_search.validate().map_err(|e| cfg(e.to_string()))?;
        self.training.ann.validate().map_err(|e| cfg(format!("training.ann: {e}")))?;
        let t = &self.training;
        if !(t.train_fraction > 0.0 && t.val_fraction >= 0.0 && t.train_fraction + t.val_fraction <= 1.0) {
            return Err(cfg("training fractions must be positive and sum to at most 1".into()));
        }
        if !(t.lr.ridge >= 0.0) {
            return Err(cfg("training.lr.ridge must be >= 0".into()));
        }
        let e = &self.evaluation;
        if !(e.histogram_bin_width > 0.0) {
            return Err(cfg("evaluation.histogram_bin_width must be positive".into()));
        }
        if !e.methods.contains(&Method::Grb) {
            return Err(cfg("evaluation.methods must include GRB (the reference)".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn sha256(&self) -> String {
        hex(&Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
