use thiserror::Error;

/// Errors produced by the custom-token library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown token: {0:?} is not covered by the vocabulary")]
    UnknownToken(String),
    #[error("rank {rank} exceeds the maximum {max} for {count} vectors of dimension {dim}")]
    RankTooLarge { rank: usize, max: usize, count: usize, dim: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("empty candidate list")]
    EmptyCandidates,
    #[error("at least one image is required")]
    NoImages,
    #[error("zero vector cannot be normalized")]
    ZeroVector,
    #[error("template is missing the {0} slot")]
    SlotMissing(&'static str),
    #[error("invalid template {template:?}: {reason}")]
    InvalidTemplate { template: String, reason: String },
    #[error("sequence of {len} tokens exceeds the context length {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("bad image: {0}")]
    BadImage(String),
    #[error("composition weight {0} is outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("attribute list is empty")]
    EmptyAttributes,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("both classes must be present (positives: {positives}, negatives: {negatives})")]
    OneClassMissing { positives: usize, negatives: usize },
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("non-finite loss at iteration {iteration}: total={total}, diffusion={diffusion}, classification={classification}")]
    NonFiniteLoss { iteration: usize, total: f64, diffusion: f64, classification: f64 },
    #[error("weight grid is empty")]
    NoWeights,
    #[error("invalid weight grid: {0}")]
    InvalidGrid(String),
    #[error("index is empty")]
    EmptyIndex,
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("empty input")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
