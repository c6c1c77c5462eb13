use std::path::PathBuf;

use apsr_core::{ConfigError, ParamError, SimError};
use thiserror::Error;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("cannot read {path}: {source}")]
    ReadInput { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    ParseConfig { path: PathBuf, source: toml::de::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("json output failed: {0}")]
    Json(#[from] serde_json::Error),
    #[error("run with seed {seed} failed: {source}")]
    Run { seed: u64, source: SimError },
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    /// 2 for anything the user can fix in the invocation or config, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_)
            | CliError::Config(_)
            | CliError::Param(_)
            | CliError::ReadInput { .. }
            | CliError::ParseConfig { .. } => EXIT_USAGE,
            CliError::Run {
                source: SimError::Config(_),
                ..
            } => EXIT_USAGE,
            CliError::Write { .. } | CliError::Csv(_) | CliError::Json(_) | CliError::Run { .. } => EXIT_RUNTIME,
        }
    }
}
