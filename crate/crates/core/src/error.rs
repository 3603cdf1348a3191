use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: usize, id: String },

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, one per variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "E_INVALID_INPUT",
            Error::InvalidConfig(_) => "E_INVALID_CONFIG",
            Error::Parse { .. } => "E_PARSE",
            Error::DuplicateId { .. } => "E_DUPLICATE_ID",
            Error::Integrity(_) => "E_INTEGRITY",
            Error::Transport { .. } => "E_TRANSPORT",
            Error::Protocol(_) => "E_PROTOCOL",
            Error::Io(_) => "E_IO",
        }
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }
}
