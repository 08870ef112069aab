use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape {
        what: String,
        expected: String,
        got: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A kernel row summed to zero (all affinities underflowed).
    #[error("kernel degeneracy: {0}; consider a larger epsilon")]
    Degeneracy(String),

    /// Matrix factorization failed.
    #[error("ill-conditioned system: {0}; consider a larger noise variance")]
    Conditioning(String),

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    /// Integration produced a non-finite state.
    #[error("trajectory blew up at step {step}")]
    Blowup { step: usize },

    #[error("{path}:{row}:{col}: {msg}")]
    Parse {
        path: String,
        row: usize,
        col: usize,
        msg: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(what: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            what: what.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
