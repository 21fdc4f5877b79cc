//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// The regularized system `cI + K` could not be factorized and is not
    /// numerically invertible. Callers should switch to min-norm fitting.
    #[error("singular kernel system at c = {c}: {rank}/{size} numerical rank; use min-norm fitting")]
    SingularSystem { c: f64, rank: usize, size: usize },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("degenerate split: {0}")]
    DegenerateSplit(String),

    #[error("malformed CSV ({path}): {reason}")]
    Csv { path: String, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with a description of what was being attempted.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Short machine-readable category, used by the CLI for exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } | Error::InvalidInput(_) => "input",
            Error::SingularSystem { .. } | Error::Eigen(_) => "numerical",
            Error::InvalidConfig(_) | Error::ConfigMismatch(_) | Error::Json(_) => "config",
            Error::DegenerateSplit(_) => "split",
            Error::Csv { .. } => "csv",
            Error::Io { .. } => "io",
            Error::Context { source, .. } => source.category(),
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
