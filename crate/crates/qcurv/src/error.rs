use thiserror::Error;

/// Failure modes shared by every module.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("pole: {0}")]
    Pole(String),
    #[error("singularity: {0}")]
    Singularity(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("grid range: {0}")]
    GridRange(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("line search failed: {0}")]
    LineSearch(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
