//! Run manifest: the effective config, its hash, and per-stage seeds,
//! timings and output hashes.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, RunConfig};
use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub config_sha256: String,
    pub seed: u64,
    pub jobs: usize,
    pub elapsed_s: f64,
    pub outputs: Vec<FileEntry>,
    /// Stage-specific counts (instances, found labels, excluded solves, ...).
    pub notes: BTreeMap<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub root_seed: u64,
    pub config_sha256: String,
    pub config: RunConfig,
    pub stages: BTreeMap<String, StageEntry>,
}

impl RunManifest {
    pub fn new(cfg: &RunConfig) -> Self {
        RunManifest { root_seed: cfg.seed, config_sha256: cfg.sha256(), config: cfg.clone(), stages: BTreeMap::new() }
    }

    /// Loads the manifest in `dir` if there is one and rebinds it to `cfg`.
    pub fn open(dir: &Path, cfg: &RunConfig) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        let mut m = if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::upstream(&path, e))?;
            serde_json::from_str::<RunManifest>(&text).map_err(|e| CliError::upstream(&path, e))?
        } else {
            RunManifest::new(cfg)
        };
        m.root_seed = cfg.seed;
        m.config_sha256 = cfg.sha256();
        m.config = cfg.clone();
        Ok(m)
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(CliError::other)?;
        std::fs::write(dir.join(MANIFEST_FILE), text).map_err(CliError::other)
    }
}

pub fn file_sha256(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::upstream(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

pub fn file_entry(dir: &Path, rel: &str) -> Result<FileEntry, CliError> {
    let path = dir.join(rel);
    let bytes = std::fs::metadata(&path).map_err(|e| CliError::upstream(&path, e))?.len();
    Ok(FileEntry { path: rel.to_string(), sha256: file_sha256(&path)?, bytes })
}
