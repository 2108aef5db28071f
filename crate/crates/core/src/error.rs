use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("line {line}: duplicate triple {head} {rel} {tail}")]
    DuplicateTriple {
        line: usize,
        head: String,
        rel: String,
        tail: String,
    },

    #[error("line {line}: self-loop triple on entity {entity}")]
    SelfLoop { line: usize, entity: String },

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("unknown entity symbol `{0}`")]
    UnknownEntity(String),

    #[error("mention `{symbol}` not found in sentence tokens")]
    MentionNotFound { symbol: String },

    #[error("no template for relation {0}")]
    MissingTemplate(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index-space mismatch: {0}")]
    IndexSpace(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("bad file format in {path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("missing input {0}")]
    MissingInput(PathBuf),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("checkpoint holds a {found} model, expected {expected}")]
    VariantMismatch { expected: String, found: String },

    #[error("empty prediction list")]
    EmptyPredictions,

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::NonFinite(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
