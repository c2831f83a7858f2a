//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SinaiError {
    /// Invalid configuration or parameter values.
    #[error("configuration error: {0}")]
    Config(String),

    /// A lattice index fell outside the window it was used against.
    #[error("index {index} outside window [{lo}, {hi}]")]
    OutOfWindow { index: i64, lo: i64, hi: i64 },

    /// A caller violated an operation contract (e.g. passed a non-valley).
    #[error("contract violation: {0}")]
    Contract(String),

    /// An extrema scan could not be closed within the window cap.
    /// Carries how far the scan got so callers can diagnose.
    #[error("scan incomplete: {context} (scanned to {reached}, committed {committed} markers)")]
    ScanIncomplete {
        context: String,
        reached: i64,
        committed: usize,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SinaiError>;

impl SinaiError {
    pub fn config(msg: impl Into<String>) -> Self {
        SinaiError::Config(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        SinaiError::Contract(msg.into())
    }

    /// Process exit code per the CLI contract: 1 usage/config, 2 scan
    /// incomplete, 3 acceptance failure (set by the check command itself).
    pub fn exit_code(&self) -> i32 {
        match self {
            SinaiError::ScanIncomplete { .. } => 2,
            _ => 1,
        }
    }
}
