//! Error type shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration or argument fails validation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A numeric precondition does not hold (e.g. zero-norm signal, beta outside (0,1)).
    #[error("domain error: {0}")]
    Domain(String),

    /// Signal evaluation produced a non-finite value inside a sampling cell.
    #[error("signal evaluation failed on cell {cell}: {detail}")]
    Evaluation { cell: usize, detail: String },

    /// The segmentation problem admits no feasible solution.
    #[error("infeasible fit: the single-cell band at cell {cell} is empty")]
    Infeasible { cell: usize },

    /// A caller violated an API contract (malformed partition, off-grid candidate, ...).
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {detail}")]
    Parse { what: String, detail: String },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 for invalid input, 3 for infeasible fits.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible { .. } => 3,
            Error::Io { .. } | Error::Json(..) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
