//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed type path or hierarchy file (bad syntax, duplicate line).
    #[error("hierarchy error: {0}")]
    Hierarchy(String),

    /// A type path or index that the hierarchy does not contain.
    #[error("unknown type: {0}")]
    UnknownType(String),

    /// Input that fails a structural check. `line` is 1-based when the
    /// input came from a file.
    #[error("validation error{}: {msg}", fmt_line(.line))]
    Validation { line: Option<usize>, msg: String },

    /// Shape disagreement between two pieces of data.
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },

    /// Label propagation left a row with no admissible mass to renormalise.
    #[error("label propagation starved row {row}: candidate mass sums to zero")]
    StarvedRow { row: usize },

    /// A loss or intermediate quantity stopped being finite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation {
            line: None,
            msg: msg.into(),
        }
    }

    pub fn validation_at(line: usize, msg: impl Into<String>) -> Self {
        Error::Validation {
            line: Some(line),
            msg: msg.into(),
        }
    }

    /// True for failures of the arithmetic rather than of the input.
    /// The command line maps these to a distinct exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::StarvedRow { .. } | Error::NonFinite(_))
    }
}

fn fmt_line(line: &Option<usize>) -> String {
    match line {
        Some(n) => format!(" at line {n}"),
        None => String::new(),
    }
}
