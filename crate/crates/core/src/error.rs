use thiserror::Error;

/// Errors produced across the simulator, pre-training and network stack.
#[derive(Debug, Error)]
pub enum QukanError {
    /// An argument fell outside the operation's domain (bad index, non-finite angle, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A structurally invalid configuration (degenerate basis, zero-mass target row, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// Loss became non-finite during optimisation.
    #[error("training diverged at iteration {iteration}: {reason}")]
    Divergence { iteration: usize, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("dataset split error: {0}")]
    Split(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QukanError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(QukanError::Domain(msg.into()))
}

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(QukanError::Config(msg.into()))
}
