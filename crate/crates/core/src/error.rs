use std::path::PathBuf;

/// Errors produced by the ensembling library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Two sequences that must line up have different lengths.
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    /// An operation's documented precondition does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A label fell outside `0..num_classes`.
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: u32, num_classes: u32 },

    /// Refused to run an exponential-time computation on too large an input.
    #[error("resource guard: {0}")]
    ResourceGuard(String),

    #[error("invalid weights: {0}")]
    InvalidWeights(String),

    /// A per-record failure, tagged with the offending record's identifier.
    #[error("record {input_id}: {source}")]
    Record {
        input_id: String,
        #[source]
        source: Box<Error>,
    },

    /// Malformed input at a known line of a file.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Well-formed input that violates the record schema.
    #[error("schema violation at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn dimension(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            got,
        }
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }

    pub(crate) fn in_record(self, input_id: &str) -> Self {
        Error::Record {
            input_id: input_id.to_owned(),
            source: Box::new(self),
        }
    }
}
