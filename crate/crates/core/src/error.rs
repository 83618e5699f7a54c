use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bad input: {0}")]
    BadInput(String),

    #[error("Riccati iteration did not converge after {iterations} iterations (last step {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("closed loop is not stable: spectral radius {rho} >= 1")]
    NotStabilizable { rho: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate instance: {0}")]
    DegenerateInstance(String),

    #[error("rollout diverged at step {step}")]
    Diverged { step: usize },

    #[error("causality violation: disturbance {requested} read at step {now}")]
    CausalityViolation { requested: usize, now: usize },

    #[error("file not found: {}", .0.display())]
    MissingFile(PathBuf),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid record at row {row}: {message}")]
    Validation { row: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn bad_input(msg: impl Into<String>) -> Self {
        Error::BadInput(msg.into())
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Strips any [`Error::Context`] wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }
}
