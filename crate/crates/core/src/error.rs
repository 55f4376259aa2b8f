use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// An input sits on a boundary where a logarithm or reciprocal diverges.
    #[error("singular input: {0}")]
    SingularInput(String),
    #[error("problem dimension {dim} exceeds the size budget {limit}")]
    Budget { dim: usize, limit: usize },
    #[error("solver failure: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
