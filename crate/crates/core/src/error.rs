use thiserror::Error;

/// Every condition a library operation can signal.
#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel-exceeds-length: kernel width {width} exceeds sentence length {len}")]
    KernelExceedsLength { width: usize, len: usize },
    #[error("empty-pool: max-over-time on an empty feature map")]
    EmptyPool,
    #[error("shape-error: {0}")]
    Shape(String),
    #[error("empty-support: no unmasked position")]
    EmptySupport,
    #[error("invalid-probability: {0}")]
    InvalidProbability(f64),
    #[error("detached-loss: {0}")]
    DetachedLoss(String),
    #[error("non-finite-gradient in parameter `{0}`")]
    NonFiniteGradient(String),
    #[error("non-deterministic-under-check: repeated evaluation differs")]
    NonDeterministic,
    #[error("parse-error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("dim-mismatch at line {line}: expected {expected} values, found {found}")]
    DimMismatch { line: usize, expected: usize, found: usize },
    #[error("degenerate-labels: training data contains a single class")]
    DegenerateLabels,
    #[error("empty-sentence")]
    EmptySentence,
    #[error("missing-labels: document `{0}` has no sentence labels")]
    MissingLabels(String),
    #[error("no-training-data")]
    NoTrainingData,
    #[error("no-validation-data")]
    NoValidationData,
    #[error("alignment-error: unmatched document ids {0:?}")]
    Alignment(Vec<String>),
    #[error("checkpoint-mismatch: {0}")]
    CheckpointMismatch(String),
    #[error("invalid-config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
