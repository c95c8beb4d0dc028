use std::path::PathBuf;

use num_complex::Complex64;

/// Errors produced by the numerical pipelines.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular system at shift {shift}: {context}")]
    Singular { shift: Complex64, context: String },

    #[error("{context}: no convergence after {iterations} iterations (last estimate {last})")]
    NoConvergence {
        context: String,
        iterations: usize,
        last: f64,
    },

    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),

    #[error("ambiguous branch match at alpha={alpha}, branch {branch}: candidates {first} and {second} are within {gap:e}")]
    AmbiguousBranch {
        alpha: f64,
        branch: usize,
        first: Complex64,
        second: Complex64,
        gap: f64,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
