use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: malformed JSON: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },

    #[error("document {doc_id:?}: block {block} row {row} has {got} cells, expected {expected}")]
    RaggedTable {
        doc_id: String,
        block: usize,
        row: usize,
        got: usize,
        expected: usize,
    },

    #[error("document {doc_id:?}: {reason}")]
    InvalidDocument { doc_id: String, reason: String },

    #[error("query {qid:?}: {reason}")]
    InvalidQuery { qid: String, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("no embedding for text {0:?}")]
    MissingEmbedding(String),

    #[error("duplicate entry {0:?}")]
    DuplicateEntry(String),

    #[error("cannot train a codebook on an empty training set")]
    EmptyTrainingSet,

    #[error("unknown search mode {0:?} (expected \"exact\" or \"pq\")")]
    UnknownMode(String),

    #[error("{}: not an index directory (manifest.json missing)", .0.display())]
    NotAnIndex(PathBuf),

    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corpus too small: {0}")]
    CorpusTooSmall(String),

    #[error("k must be at least 1")]
    InvalidK,

    #[error("gold set is empty")]
    EmptyGold,

    #[error("scorer failed: {0}")]
    Scorer(String),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
