//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A numerical operation failed (non-finite accumulation, factorization
    /// breakdown, or a corrupted state). `rows` is the number of samples
    /// absorbed when the failure surfaced.
    #[error("numerical failure after {rows} samples: {msg}")]
    Numerical { rows: usize, msg: String },

    /// The per-sample weight coefficient left the representable range of
    /// f64 in direct mode. Rescaled mode is the remedy for long streams.
    #[error("weight coefficient overflow at sample {n}; switch to rescaled mode for unbounded streams")]
    Overflow { n: usize },

    /// Underlying I/O failure.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A malformed input row. `row` is 1-based and counts data rows.
    #[error("parse error at row {row}: {msg}")]
    Parse { row: usize, msg: String },

    /// A prequential run failed mid-stream; `step` is the 1-based online
    /// step index at which the underlying error occurred.
    #[error("run failed at online step {step}: {source}")]
    RunFailure {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
