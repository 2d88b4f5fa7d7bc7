use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("annotator {annotator} already labeled example {example}")]
    DuplicateAnnotation { example: usize, annotator: usize },

    #[error("label {label} is out of range for {num_classes} classes")]
    InvalidLabel { label: usize, num_classes: usize },

    #[error("example {example} is out of range (table has {num_examples} examples)")]
    UnknownExample { example: usize, num_examples: usize },

    #[error("example {0} has no annotations")]
    Unlabeled(usize),

    #[error("annotation table is empty")]
    EmptyTable,

    #[error("cannot train on an empty set of examples")]
    EmptyTrainingSet,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid probability row {row}: {reason}")]
    InvalidProbabilities { row: usize, reason: String },

    #[error("no predictions for example `{0}`")]
    MissingPredictions(String),

    #[error("{scorer} needs at least {needed} models, got {got}")]
    TooFewModels {
        scorer: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{0} already holds results; pass --force to overwrite")]
    OutputExists(std::path::PathBuf),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
