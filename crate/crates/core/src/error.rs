use std::io;
use std::path::PathBuf;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] io::Error),

    #[error("io error at {path}: {source}")]
    IoAt {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: malformed record: {message}")]
    MalformedRecord { line: u64, message: String },

    #[error("line {line}: invalid UTF-8")]
    InvalidUtf8 { line: u64 },

    #[error("duplicate document id {id:?}")]
    DuplicateId { id: String },

    #[error("record {record}: missing field {field:?}")]
    FieldMissing { field: String, record: u64 },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("line {line}: ragged row, expected {expected} cells, found {found}")]
    RaggedRow {
        line: u64,
        expected: usize,
        found: usize,
    },

    #[error("invalid size {0:?}")]
    SizeParse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shard {shard}, line {line}: {message}")]
    Build {
        shard: String,
        line: u64,
        message: String,
    },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("index integrity error: {0}")]
    Integrity(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("query analyzes to zero tokens")]
    EmptyQuery,

    #[error("analyzer mismatch: index uses {recorded}, caller supplied {supplied}")]
    AnalyzerMismatch { recorded: String, supplied: String },

    #[error("page {page} out of range, valid pages are {min}..={max}")]
    PageOutOfRange { page: i64, min: i64, max: i64 },

    #[error("unknown document {0:?}")]
    UnknownDocument(String),

    #[error("authentication failed: {0}")]
    Auth(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("corrupted archive: {0}")]
    Corruption(String),

    #[error("publish rejected: {0}")]
    PublishRejected(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("invalid name {0:?}: must match [a-z0-9][a-z0-9-]*")]
    Naming(String),

    #[error("unsupported registry location {0:?}")]
    Location(String),

    #[error("missing template keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    #[error("unknown template keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),

    #[error("template error: {0}")]
    Template(String),

    #[error("template {0:?} not found")]
    TemplateNotFound(String),

    #[error("startup error: {0}")]
    Startup(String),
}

impl Error {
    pub(crate) fn io_at(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::IoAt {
            path: path.into(),
            source,
        }
    }

    /// Transport failures are worth retrying; everything else is final.
    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Transport(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
