use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid velocity basis: {0}")]
    InvalidBasis(String),

    #[error("right-hand side has kernel components of size {residual:.3e} (tolerance {tolerance:.1e})")]
    NonOrthogonalRhs { residual: f64, tolerance: f64 },

    #[error("collision operator is not coercive on the kernel complement (lambda_est = {lambda_est:.3e})")]
    SingularOperator { lambda_est: f64 },

    #[error("collision assembly failed: {0}")]
    Assembly(String),

    #[error("time step {dt:.3e} exceeds the CFL bound {limit:.3e}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("non-finite value in field `{field}` at t = {t:.6}")]
    NonFinite { field: &'static str, t: f64 },

    #[error("initial field `{field}` is not solenoidal (|div| = {residual:.3e})")]
    NonSolenoidal { field: &'static str, residual: f64 },

    #[error("sampling mismatch: {0}")]
    SamplingMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("while integrating at t = {t:.6}: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed file: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format { path: path.into(), reason: reason.into() }
    }

    /// Attach the simulation time at which an error surfaced.
    pub fn at_time(self, t: f64) -> Self {
        match self {
            e @ Error::AtTime { .. } => e,
            other => Error::AtTime { t, source: Box::new(other) },
        }
    }

    /// True for errors that come from I/O rather than numerics or validation.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Format { .. } => true,
            Error::AtTime { source, .. } => source.is_io(),
            _ => false,
        }
    }

    /// True for errors raised by a numerical failure (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::NonOrthogonalRhs { .. }
            | Error::SingularOperator { .. }
            | Error::Assembly(_)
            | Error::CflViolation { .. }
            | Error::NonFinite { .. } => true,
            Error::AtTime { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
