use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by the CLI, grouped by exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("{source_name}: {message}")]
    Validation { source_name: String, message: String },

    #[error(transparent)]
    Model(#[from] sizeflags_core::Error),
}

impl CliError {
    /// 2 configuration, 3 I/O, 4 parse, 5 validation, 6 model.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Parse { .. } => 4,
            CliError::Validation { .. } => 5,
            CliError::Model(_) => 6,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Validation { .. } => "validation",
            CliError::Model(_) => "model",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
