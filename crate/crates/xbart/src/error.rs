//! Error type shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// `InvalidInput` and `ContractViolation` flag caller mistakes (bad data,
/// bad arguments); `Numeric` and `Accounting` flag internal failures that
/// indicate a diverged fit or corrupted sampler state.
#[derive(Debug, Error)]
pub enum XbartError {
    /// Rejected input: malformed data, non-finite values, shape mismatches.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A documented precondition of an operation was violated.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Numeric failure inside the sampler (overflow, non-finite state).
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Internal bookkeeping corruption (e.g. split-count accounting).
    #[error("internal accounting error: {0}")]
    Accounting(String),

    /// Model file could not be parsed.
    #[error("model parse error at byte {offset} (line {line}, column {column}): {message}")]
    ModelParse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    /// Model file has a format version this build does not understand.
    #[error("model format version {found} is not supported (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, XbartError>;

impl XbartError {
    /// Process exit code for the CLI: 2 for input errors, 3 for numeric failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            XbartError::Numeric(_) | XbartError::Accounting(_) => 3,
            _ => 2,
        }
    }
}
