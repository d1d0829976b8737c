use std::path::{Path, PathBuf};

use repscen::cflp::CflpError;
use repscen::eval::EvalError;
use repscen::mip::MipError;
use repscen::model::ModelError;
use repscen::rs_search::RsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("upstream artifact {}: {message}", path.display())]
    Upstream { path: PathBuf, message: String },
    #[error("solver backend error: {0}")]
    Backend(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Upstream { .. } => 3,
            CliError::Backend(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    pub fn upstream(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Upstream { path: path.to_path_buf(), message: e.to_string() }
    }

    pub fn other(e: impl std::fmt::Display) -> Self {
        CliError::Other(e.to_string())
    }
}

fn backend_mip(e: &MipError) -> bool {
    matches!(e, MipError::Backend { .. })
}

fn backend_model(e: &ModelError) -> bool {
    matches!(e, ModelError::Solver(m) if backend_mip(m))
}

/// Solver-backend failures map to their own exit code; anything else is a
/// generic stage failure.
pub fn classify(e: EvalError) -> CliError {
    let backend = match &e {
        EvalError::Mip(m) => backend_mip(m),
        EvalError::Model(m) => backend_model(m),
        EvalError::Search(RsError::Model(m)) => backend_model(m),
        _ => false,
    };
    if backend {
        CliError::Backend(e.to_string())
    } else {
        CliError::other(e)
    }
}

pub fn classify_cflp(e: CflpError) -> CliError {
    match e {
        CflpError::Model(m) if backend_model(&m) => CliError::Backend(m.to_string()),
        e => CliError::other(e),
    }
}
