use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector has zero norm")]
    ZeroVector,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("text is empty")]
    EmptyText,

    #[error("query is empty")]
    EmptyQuery,

    #[error("embedding failed: {0}")]
    EmbeddingFailed(String),

    /// Transport-level failure; callers may retry.
    #[error("network error: {0}")]
    Network(String),

    /// The remote answered, but not in the expected shape.
    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("conversation stream is closed")]
    BusClosed,

    #[error("predictor unavailable: {0}")]
    PredictorUnavailable(String),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("unpaired benchmark records: {0}")]
    UnpairedRecords(String),

    #[error("{context}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Network(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
