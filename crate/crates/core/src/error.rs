use thiserror::Error;

/// Errors surfaced by the analyzer.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed input document, code table, or expression.
    #[error("parse error: {0}")]
    Parse(String),
    /// Input violates a model invariant (distribution support, index ranges, ...).
    #[error("validation error: {0}")]
    Validation(String),
    /// A materialization cap was exceeded; the lazy or Monte Carlo path applies.
    #[error("cap exceeded: {0}")]
    CapExceeded(String),
    /// A solver or search budget was exhausted before an exact answer was certified.
    #[error("budget exceeded: {0}")]
    BudgetExceeded(String),
    /// A verification run found a violated identity or bound.
    #[error("invariant violation: {0}")]
    Violation(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parse(msg: impl Into<String>) -> Self {
        Error::Parse(msg.into())
    }
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
    pub fn cap(msg: impl Into<String>) -> Self {
        Error::CapExceeded(msg.into())
    }
    pub fn budget(msg: impl Into<String>) -> Self {
        Error::BudgetExceeded(msg.into())
    }
    pub fn violation(msg: impl Into<String>) -> Self {
        Error::Violation(msg.into())
    }
}
