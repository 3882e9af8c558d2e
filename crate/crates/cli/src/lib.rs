//! Experiment driver behind the `qukan` binary: configuration, checkpoints,
//! dataset preparation, training runs and the files each command writes.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod experiment;

use qukan::QukanError;

/// Process exit status for each failure class.
pub mod exit_code {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const MISSING_ARTIFACT: i32 = 3;
    pub const DIVERGENCE: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("training did not converge: {0}")]
    Divergence(String),
    #[error(transparent)]
    Model(QukanError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit_code::CONFIG,
            CliError::MissingArtifact(_) => exit_code::MISSING_ARTIFACT,
            CliError::Divergence(_) => exit_code::DIVERGENCE,
            CliError::Model(_) | CliError::Io(_) => exit_code::OTHER,
        }
    }
}

impl From<QukanError> for CliError {
    fn from(e: QukanError) -> Self {
        match e {
            QukanError::Config(m) => CliError::Config(m),
            QukanError::Divergence { .. } => CliError::Divergence(e.to_string()),
            QukanError::Io(io) => CliError::Io(io),
            other => CliError::Model(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
