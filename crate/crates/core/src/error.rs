//! Error types shared by the library modules.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violated a documented invariant (box extents, class range, ...).
    #[error("validation error: {0}")]
    Validation(String),

    /// A value lies outside the mathematical domain of a formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// A cost matrix entry that is NaN or infinite.
    #[error("cost matrix entry at row {row}, col {col} is not finite ({value})")]
    NonFiniteCost { row: usize, col: usize, value: f64 },

    /// A malformed line in a label or prediction file.
    #[error("{}:{line}: {message} (token `{token}`)", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        token: String,
        message: String,
    },

    /// A well-formed line whose values are out of range.
    #[error("{}:{line}: {message}", path.display())]
    InvalidRecord {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The request cannot be served with the given inputs (nothing to evaluate, too few models).
    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
