use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied an argument outside the operation's domain.
    #[error("invalid input: {0}")]
    Input(String),
    /// A file did not have the expected layout.
    #[error("format error: {0}")]
    Format(String),
    /// A file or manifest parsed but violated a data invariant.
    #[error("validation error: {0}")]
    Validation(String),
    /// A loss term or gradient became NaN or infinite.
    #[error("non-finite value in `{term}`")]
    Numeric { term: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn numeric(term: impl Into<String>) -> Self {
        Error::Numeric { term: term.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
