use thiserror::Error;

/// Errors raised by estimators, oracles and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("contract violation: {0}")]
    Contract(String),
    /// Not enough data yet to answer a query.
    #[error("not ready: {0}")]
    NotReady(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
