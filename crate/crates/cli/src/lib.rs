//! Operator surface for the AIRS simulator: config resolution, training and
//! evaluation runs, plot-ready series and ablation tables.

pub mod commands;
pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use airs_core::rl::RlError;
use thiserror::Error;

/// SHA-256 over the core and CLI sources, fixed at build time.
pub const CODE_HASH: &str = env!("AIRS_CODE_HASH");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("numeric abort, state dumped to {}", .0.display())]
    Numeric(PathBuf),
    #[error(transparent)]
    Rl(RlError),
    #[error("run {run}: {message}")]
    Run { run: String, message: String },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            _ => 1,
        }
    }
}

impl From<RlError> for CliError {
    fn from(e: RlError) -> Self {
        match e {
            RlError::Config(_) | RlError::UnknownAgent(_) | RlError::NoPolicy(_) => CliError::Config(e.to_string()),
            other => CliError::Rl(other),
        }
    }
}
