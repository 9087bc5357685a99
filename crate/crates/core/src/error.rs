use thiserror::Error;

/// Failure modes shared by every module of the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid spacing mismatch: {0} vs {1}")]
    DeltaMismatch(f64, f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("curve constraint residual {residual:e} exceeds tolerance {tol:e}")]
    Constraint { residual: f64, tol: f64 },

    #[error("flow lost positivity at t={t}: value {value:e} at site {site}")]
    Positivity { t: f64, site: i64, value: f64 },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
