//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration, topology, or dimension mismatch.
    #[error("config error: {0}")]
    Config(String),

    /// Numerical fault while stepping the plant or pipeline.
    #[error("simulation fault at step {step}: {msg}")]
    SimFault { step: u64, msg: String },

    /// Non-finite loss or similar failure during model training.
    #[error("training fault at epoch {epoch}: {msg}")]
    TrainFault { epoch: usize, msg: String },

    /// Malformed model file or unsupported version.
    #[error("model file error: {0}")]
    ModelFile(String),

    /// Malformed trace/dataset file.
    #[error("data file error: {0}")]
    DataFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn sim_fault(step: u64, msg: impl Into<String>) -> Self {
        Error::SimFault {
            step,
            msg: msg.into(),
        }
    }
}
