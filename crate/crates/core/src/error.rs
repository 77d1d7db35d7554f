use std::io;

use thiserror::Error;

/// Errors raised by the library.
///
/// The variants map onto the process exit codes used by the command-line
/// driver (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, lengths or symmetry did not match what an operation requires.
    #[error("structural error: {0}")]
    Structural(String),

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("invalid budget K={budget} for capacity {capacity}: {reason}")]
    Budget {
        budget: usize,
        capacity: usize,
        reason: &'static str,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    /// NaN/inf in a loss or gradient, or a negative value where a
    /// non-negative one is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A file on disk is malformed: bad magic, version, checksum or truncated.
    #[error("format error: {0}")]
    Format(String),

    /// An artifact is well formed but does not match what the caller asked for.
    #[error("artifact mismatch: {0}")]
    Mismatch(String),

    #[error("audit failure: {0}")]
    Audit(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    /// Exit code contract: 2 config, 3 artifact mismatch, 4 numeric,
    /// 5 assertion/audit failure, 1 for anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Budget { .. } | Error::Json(_) => 2,
            Error::Mismatch(_) | Error::Format(_) => 3,
            Error::Numeric(_) | Error::Convergence { .. } => 4,
            Error::Audit(_) => 5,
            Error::Structural(_) | Error::Input(_) | Error::Io(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
