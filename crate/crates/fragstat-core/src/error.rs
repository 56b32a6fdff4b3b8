use thiserror::Error;

/// Errors surfaced by simulators, estimators and the statistics kit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Requested operation is undefined for the given law (e.g. a density
    /// query on a discrete waiting law).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// An experiment refused to run because the dislocation law fails one of
    /// the standing model assumptions.
    #[error("law fails model assumptions: {0}")]
    AssumptionFailed(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
