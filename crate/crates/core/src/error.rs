use thiserror::Error;

/// Errors raised across mesh construction, assembly, solves and probes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("ellipticity violated at ({x}, {y}): eigenvalue {eigenvalue} outside [{lower}, {upper}]")]
    Ellipticity {
        x: f64,
        y: f64,
        eigenvalue: f64,
        lower: f64,
        upper: f64,
    },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("discrete system singular at h = {h}, r = {degree}: {reason}")]
    Solver { h: f64, degree: usize, reason: String },

    #[error("stability probe failed: {0}")]
    Probe(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
