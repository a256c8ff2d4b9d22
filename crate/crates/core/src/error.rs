use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Inconsistent or invalid configuration (grids, control sets, files).
    #[error("configuration error: {0}")]
    Config(String),

    /// A dynamics evaluator produced a non-finite derivative.
    #[error("integration error at cell {cell} (t = {time}): {message}")]
    Integration {
        cell: usize,
        time: f64,
        message: String,
    },

    /// The game tree would exceed the node budget.
    #[error("node budget exceeded: budget {budget}, required at least {required}")]
    Resource { budget: u64, required: u64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}
