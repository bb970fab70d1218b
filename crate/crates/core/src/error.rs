use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An objective or critic produced a non-finite value.
    #[error("non-finite {what} at theta = {theta:?}")]
    NonFinite { what: String, theta: Vec<f64> },

    #[error("singular linear system in {context}; retry with damping > 0")]
    Singular { context: &'static str },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse { line, message: message.into() }
    }

    /// Whether the error stems from malformed or out-of-range input rather
    /// than from a computation.
    pub fn is_invalid_input(&self) -> bool {
        matches!(
            self,
            Error::InvalidMdp(_) | Error::InvalidParameter(_) | Error::InvalidArgument(_) | Error::Parse { .. }
        )
    }
}
