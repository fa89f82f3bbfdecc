use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Every violated constraint found while validating a configuration.
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    ConfigViolations(Vec<String>),

    #[error("unknown agent id {0}")]
    UnknownAgent(usize),

    #[error("unknown satellite id {0}")]
    UnknownSatellite(usize),

    #[error("reference solver did not converge: gradient norm {grad_norm:e} after {iterations} iterations (tol {tol:e})")]
    NonConvergence {
        iterations: usize,
        grad_norm: f64,
        tol: f64,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
