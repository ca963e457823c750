//! Crate-wide error type.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: malformed record: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("duplicate document id {id:?}")]
    DuplicateId { id: String },

    #[error("sentence has no tokens; cannot embed {key:?}")]
    EmptySentence { key: String },

    #[error("vector {key:?} has dimension {found}, store expects {expected}")]
    DimensionMismatch {
        key: String,
        expected: usize,
        found: usize,
    },

    #[error("vector {key:?} has a non-finite or zero-norm value")]
    BadVector { key: String },

    #[error("no vector stored for key {key:?}")]
    MissingVector { key: String },

    #[error("query vector is not unit-normalized (norm {norm})")]
    NonUnitQuery { norm: f64 },

    #[error("threshold {value} outside (0, 1)")]
    BadThreshold { value: f64 },

    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("unknown configuration key {key:?}")]
    UnknownConfigKey { key: String },

    #[error("mixed variants in dataset write: expected {expected}, found {found}")]
    MixedVariants { expected: String, found: String },

    #[error("{what}: empty input")]
    EmptyInput { what: String },

    #[error("{what}: needs at least {needed} tokens, got {got}")]
    TooFewTokens {
        what: String,
        needed: usize,
        got: usize,
    },

    #[error("missing upstream artifact {path}; run `{stage}` first")]
    MissingArtifact { path: PathBuf, stage: String },

    #[error("example {id:?} not found in reference dataset")]
    UnknownExample { id: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
