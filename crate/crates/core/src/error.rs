use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A frequency argument fell outside `[0, 1]`.
    #[error("value {value} outside the domain [0, 1]")]
    Domain { value: f64 },

    /// A parameter invariant was violated at construction.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("configuration error at `{path}`: {reason}")]
    Config { path: String, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("kernel truncation too aggressive: captured mass {mass:.4} < 0.5 at radius {radius}")]
    Truncation { mass: f64, radius: usize },

    #[error("memory budget exceeded: {requested} stored values > budget {budget}; use a larger stride")]
    MemoryBudget { requested: usize, budget: usize },

    #[error("bracket error: {0}")]
    Bracket(String),

    #[error("convergence error: {0}")]
    Convergence(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed data: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn config(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI: 2 config, 3 bracket/convergence, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidParameter { .. } | Error::Truncation { .. } => 2,
            Error::Bracket(_) | Error::Convergence(_) | Error::NotFound(_) => 3,
            Error::Io { .. } => 4,
            _ => 1,
        }
    }
}
