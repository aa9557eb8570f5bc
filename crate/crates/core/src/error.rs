//! Crate-wide error type.

use std::path::PathBuf;

/// Errors produced anywhere in the harness.
///
/// Each variant maps onto one of the CLI exit codes via [`Error::exit_code`].
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate logo id `{0}`")]
    DuplicateId(String),

    #[error("record `{id}` violates invariant: {message}")]
    RecordInvariant { id: String, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid perturbation spec: {0}")]
    InvalidSpec(String),

    #[error("image error: {0}")]
    Image(String),

    #[error("mask is empty: no foreground pixels")]
    EmptyMask,

    #[error("need at least {needed} points for k-means, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("group `{group}` has {available} members, {requested} requested (shortfall {shortfall})")]
    InsufficientGroup {
        group: String,
        available: usize,
        requested: usize,
        shortfall: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("labels contain a single class")]
    SingleClass,

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("record `{0}` is not a pure-symbol record")]
    NotSymbol(String),

    #[error("record `{0}` has no exact-match judgment")]
    MissingExactMatch(String),

    #[error("record `{id}` has no {family} bucket")]
    MissingBucket { id: String, family: &'static str },

    #[error("data has rank zero (all points identical)")]
    RankZero,

    #[error("bad embedding file {path}: {message}")]
    Embedding { path: PathBuf, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("authentication failed for `{model_id}`: {message}")]
    Auth { model_id: String, message: String },

    #[error("transport failure for `{model_id}` after {attempts} attempt(s): {message}")]
    Transport {
        model_id: String,
        attempts: u32,
        message: String,
        attempt_log: Vec<String>,
    },

    #[error("malformed response from `{model_id}`: {message}")]
    MalformedResponse { model_id: String, message: String },

    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wrap an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// CLI exit code: 2 config, 3 upstream/API, 4 invariant violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Auth { .. } | Error::Transport { .. } | Error::MalformedResponse { .. } => 3,
            Error::Config(_)
            | Error::Io { .. }
            | Error::Parse { .. }
            | Error::InvalidArgument(_)
            | Error::InvalidSpec(_)
            | Error::UnknownLabel(_)
            | Error::Json(_) => 2,
            _ => 4,
        }
    }
}
