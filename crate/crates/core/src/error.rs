use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A record in an input file failed to parse or validate.
    #[error("line {line}: {message}")]
    Data { line: usize, message: String },

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("success unreachable: no training run reaches the target")]
    SuccessUnreachable,

    #[error(
        "target mismatch: discretizer fitted at {trained} but asked to discretize at {requested}"
    )]
    TargetMismatch { trained: f64, requested: f64 },

    #[error("brute force limit exceeded: trie has {nodes} nodes, limit is {limit}")]
    NodeLimitExceeded { nodes: usize, limit: usize },

    #[error("policy error: {0}")]
    Policy(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn data(line: usize, message: impl Into<String>) -> Self {
        Error::Data {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn param(message: impl Into<String>) -> Self {
        Error::InvalidParameter(message.into())
    }
}
