use thiserror::Error;

/// Errors raised by the capacity solvers, models and CLI.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of a mathematical function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A solver or quadrature setting is out of range.
    #[error("configuration error: {0}")]
    Config(String),

    /// A channel model or input file failed validation.
    #[error("model error: {0}")]
    Model(String),

    /// An iterative method hit its iteration cap.
    #[error("no convergence after {iterations} iterations: {detail}")]
    Convergence { iterations: usize, detail: String },

    /// A numerical procedure failed (bracketing, non-finite values).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// Invalid combination of user-facing arguments.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
