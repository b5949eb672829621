use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = AtnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum AtnError {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("malformed XML at line {line}: {message}")]
    Xml { line: usize, message: String },

    #[error("no token span covers characters [{from}, {to})")]
    Alignment { from: usize, to: usize },

    #[error("{path}:{line}: {message}")]
    Ingest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss is {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AtnError {
    pub(crate) fn arg(message: impl Into<String>) -> Self {
        AtnError::Argument(message.into())
    }
}
