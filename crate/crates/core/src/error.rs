use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("argument outside the cost domain: |z| = {norm} > R = {radius}")]
    Domain { norm: f64, radius: f64 },
    #[error("argument outside the range of the cost gradient: |w| = {norm} > {max}")]
    Range { norm: f64, max: f64 },
    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("problem too large: {pairs} pairs exceeds the limit of {limit}")]
    Capacity { pairs: usize, limit: usize },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("operation requires a {expected}D grid, got {actual}D")]
    Dimension { expected: usize, actual: usize },
    #[error("JKO step {step} failed: {reason} (last residual {residual:e})")]
    Step { step: usize, reason: String, residual: f64 },
    #[error("projection produced a negative density ({0:e})")]
    Projection(f64),
    #[error("io: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn param(name: &str, reason: impl Into<String>) -> Self {
        Error::Parameter { name: name.to_string(), reason: reason.into() }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
