use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: usize, message: String },

    #[error("line {line}: unknown document kind {value:?} (expected abstract, human_lay or ai_lay)")]
    UnknownKind { line: usize, value: String },

    #[error("line {line}: text is not valid UTF-8")]
    InvalidUtf8 { line: usize },

    #[error("duplicate document (id {id:?}, kind {kind})")]
    DuplicateDocument { id: String, kind: String },

    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },

    #[error("lexicon is missing required category {0:?}")]
    MissingCategory(String),

    #[error("text contains no words")]
    EmptyText,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("zero variance in {0}")]
    ZeroVariance(String),

    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by unreadable or malformed inputs rather than
    /// by the analysis itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::MalformedRecord { .. }
                | Error::UnknownKind { .. }
                | Error::InvalidUtf8 { .. }
                | Error::DuplicateDocument { .. }
                | Error::Lexicon { .. }
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
