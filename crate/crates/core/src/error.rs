use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // corpus
    #[error("malformed record at {location}: {reason}")]
    MalformedRecord { location: String, reason: String },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("file {file_id} is {found}, expected {expected}")]
    LanguageMismatch {
        file_id: String,
        expected: String,
        found: String,
    },
    #[error("majority voting needs at least 3 annotators, got {0}")]
    TooFewAnnotators(usize),
    #[error("annotation contains the Invalid label")]
    InvalidAnnotation,
    #[error("rating matrix rows sum to different rater counts ({first} vs {other} at row {row})")]
    RaggedMatrix {
        first: usize,
        other: usize,
        row: usize,
    },
    #[error("agreement needs at least 2 raters per item, got {0}")]
    TooFewRaters(usize),
    #[error("line {line} of {file_id} has no annotator labels")]
    MissingAnnotations { file_id: String, line: usize },

    // window
    #[error("line {index} is out of range for a file of {len} lines")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("few-shot prompting requires at least one demonstration")]
    MissingDemonstrations,
    #[error("invalid window configuration: {0}")]
    InvalidWindowConfig(String),

    // backends
    #[error("backend {backend} unavailable: {reason}")]
    BackendUnavailable { backend: String, reason: String },
    #[error("backend {backend} timed out after {seconds}s")]
    Timeout { backend: String, seconds: u64 },
    #[error("replay fixture has no response for prompt {0}")]
    ReplayMiss(String),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("line {line} of {file_id} has no gold label")]
    UnlabeledLine { file_id: String, line: usize },
    #[error("dimension mismatch: model expects {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("demonstration pool is empty")]
    EmptyPool,

    // rangeseg
    #[error("no ranges found in backend output")]
    NoRangesFound,
    #[error("range validation failed: {0}")]
    ValidationFailed(String),
    #[error("spans do not cover 1..={n} disjointly: {reason}")]
    CoverageViolation { n: usize, reason: String },

    // segment / eval
    #[error("input sequence is empty")]
    EmptyInput,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("segment statistics need at least 2 files, got {0}")]
    TooFewFiles(usize),
    #[error("gold labels must not contain Invalid")]
    InvalidGold,
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("missing predictions for {0}")]
    MissingPredictions(String),

    // plumbing
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("model encoding: {0}")]
    ModelEncoding(#[from] bincode::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
