use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument { arg: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("stability violation: |psi * rho| = {value} must be < 1")]
    Unstable { value: f64 },

    #[error("{what} did not converge within {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("could not generate a connected graph after {attempts} attempts")]
    Disconnected { attempts: usize },

    #[error("ill-conditioned least-squares design (condition number {0:e})")]
    IllConditioned(f64),

    #[error("zero-norm reference signal")]
    ZeroReference,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn arg(arg: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            arg,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::InvalidGraph(_) => "invalid_graph",
            Error::InvalidArgument { .. } => "invalid_argument",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Unstable { .. } => "unstable",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Disconnected { .. } => "disconnected",
            Error::IllConditioned(_) => "ill_conditioned",
            Error::ZeroReference => "zero_reference",
            Error::Unsupported(_) => "unsupported",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
