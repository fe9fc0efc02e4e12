use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration. Carries every problem found, not just the first.
    #[error("configuration error:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    /// Dataset ingestion failure, naming the offending field.
    #[error("ingestion error in {field}: {message}")]
    Ingest { field: String, message: String },

    /// Vector length mismatch between operands.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// An iterate left the finite range; the run was aborted.
    #[error("divergence at round {round}: {detail}")]
    Divergence { round: usize, detail: String },

    /// Index outside the schedule horizon.
    #[error("round index {index} outside horizon {horizon}")]
    Range { index: usize, horizon: usize },

    /// A bound formula is undefined for the supplied constants.
    #[error("degenerate constants: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(vec![msg.into()])
    }

    pub fn ingest(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Ingest {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
