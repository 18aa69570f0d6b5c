//! Crate-wide error type.
//!
//! Each variant corresponds to one error class with a stable CLI exit code
//! (see [`Error::exit_code`]); tests assert on classes, not message text.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid run configuration (bad grid, missing seed, bad estimator
    /// settings, unsupported depth, ...).
    #[error("config error: {0}")]
    Config(String),

    /// A file does not have the declared columns / layout.
    #[error("schema error: {0}")]
    Schema(String),

    /// A cell failed to parse as a finite number.
    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    /// A treatment arm has no observations (or only one arm exists).
    #[error("overlap error: {0}")]
    Overlap(String),

    /// Dimension mismatch between covariates, matrices, or policies.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// An argument is outside its mathematical domain (negative radius,
    /// weights that do not sum to one, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A solver reached a state that should be unreachable.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    /// Stable process exit code per error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Schema(_) => 3,
            Error::Parse { .. } => 4,
            Error::Overlap(_) => 5,
            Error::Dimension(_) => 6,
            Error::Domain(_) => 7,
            Error::Io(_) => 8,
            Error::Internal(_) => 9,
        }
    }
}
