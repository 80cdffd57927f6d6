//! Crate-wide error type.
//!
//! Variants are grouped by failure class so the CLI can map them onto
//! distinct exit codes.

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Error, Debug)]
pub enum Error {
    /// Shape or wiring mismatch between tensors, layers, or records.
    #[error("topology error: {0}")]
    Topology(String),

    /// Non-finite values or other numeric breakdowns.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Invalid configuration (profiles, plans, parameter ranges).
    #[error("config error: {0}")]
    Config(String),

    /// Dataset ingestion or preprocessing failure.
    #[error("data error: {0}")]
    Data(String),

    /// Training aborted (divergence, non-finite gradients).
    #[error("training error: {0}")]
    Training(String),

    /// Netlist compilation failure (fan-out or sign-budget violations).
    #[error("compile error: {0}")]
    Compile(String),

    /// Hardware/software equivalence check failed.
    #[error("equivalence error: {0}")]
    Equivalence(String),

    /// Checkpoint or report serialization failure.
    #[error("serialization error: {0}")]
    Serialize(String),

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialize(e.to_string())
    }
}
