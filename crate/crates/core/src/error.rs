use thiserror::Error;

/// Errors raised by estimators, mechanisms and I/O helpers.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    /// A precondition on an argument was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The requested configuration is valid but the mechanism cannot serve it
    /// (for example a Gaussian mechanism with `delta = 0`).
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Malformed input data (CSV, JSON spec files).
    #[error("data error: {0}")]
    Data(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// An estimator failed inside a repetition loop.
    #[error("repetition {rep} failed: {source}")]
    Repetition {
        rep: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }

    /// True for errors caused by the caller's arguments rather than the data
    /// or the environment. The CLI maps these to exit code 2.
    pub fn is_usage(&self) -> bool {
        match self {
            Error::InvalidArgument(_) | Error::Unsupported(_) => true,
            Error::Repetition { source, .. } => source.is_usage(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidArgument(msg()))
    }
}
