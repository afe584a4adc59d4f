use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the lab pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value at position {0}")]
    NonFinite(usize),

    #[error("cosine distance undefined for a zero vector")]
    ZeroVector,

    #[error("rank deficiency in Gram-Schmidt at row {row} (residual norm {norm:e})")]
    RankDeficient { row: usize, norm: f64 },

    #[error("basis generation failed: row {row} degenerate after {retries} redraws")]
    DegenerateBasis { row: usize, retries: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("zero variance: {0}")]
    ZeroVariance(String),

    #[error("all neighbour distances are zero (duplicate-saturated point)")]
    DuplicateSaturated,

    #[error("duplicate id {0}")]
    DuplicateId(u64),

    #[error("unknown id {0}")]
    UnknownId(u64),

    #[error("not a permutation: {0}")]
    NotPermutation(String),

    #[error("category error: {0}")]
    Category(String),

    #[error("key mismatch: {0}")]
    KeyMismatch(String),

    #[error("index is empty")]
    EmptyIndex,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed at byte offset {offset}: {message}")]
    Format {
        path: PathBuf,
        offset: u64,
        message: String,
    },

    #[error("{path}: unsupported format version {found} (expected {expected})")]
    VersionMismatch {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("hash mismatch for {what}: expected {expected}, found {found}")]
    HashMismatch {
        what: String,
        expected: String,
        found: String,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("[{stage}] {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, offset: u64, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            offset,
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }

    /// Wraps the error with the pipeline stage that produced it.
    pub fn at_stage(self, stage: &'static str) -> Self {
        match self {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Process exit code used by the CLI: 2 usage, 3 data, 4 invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::InvalidArgument(_) => 2,
            Error::Invariant(_) => 4,
            _ => 3,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.at_stage(stage))
    }
}
