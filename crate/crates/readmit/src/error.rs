use std::path::{Path, PathBuf};

use readmit_core::Error as CoreError;

/// Failures of a command, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad configuration, flag or input data.
    #[error("{0}")]
    Config(String),
    #[error("missing artifact: {}: {reason}", path.display())]
    Missing { path: PathBuf, reason: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Missing { .. } => 3,
            CliError::Numerical(_) => 4,
            CliError::Io(_) | CliError::Other(_) => 1,
        }
    }

    pub fn missing(path: &Path, reason: impl std::fmt::Display) -> Self {
        CliError::Missing {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::NonFinite(_) | CoreError::Diverged { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(format!("malformed JSON: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Config(format!("malformed CSV: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;
