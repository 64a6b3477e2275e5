use thiserror::Error;

/// Errors raised across the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("alphabet must contain at least one label")]
    EmptyAlphabet,

    #[error("duplicate label {0:?} in alphabet")]
    DuplicateLabel(String),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error("dimension mismatch: expected {expected}, got {actual} ({context})")]
    DimensionMismatch {
        expected: usize,
        actual: usize,
        context: String,
    },

    #[error("invalid probability value {value} at index {index}")]
    InvalidProbability { index: usize, value: f64 },

    #[error("probabilities sum to {sum}, not 1 ({context})")]
    NotNormalized { sum: f64, context: String },

    #[error("absolute continuity violated at index {index}: q = 0 but p = {p}")]
    AbsoluteContinuityViolation { index: usize, p: f64 },

    #[error("symbol {0:?} has zero marginal probability and cannot be inverted")]
    ZeroMarginal(String),

    #[error("no embedding for label {0:?}")]
    MissingEmbedding(String),

    #[error("embedding vectors have inconsistent dimensions")]
    RaggedEmbedding,

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("numerical underflow: {0}")]
    NumericalUnderflow(String),

    #[error("instance too large: {0}")]
    InstanceTooLarge(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("zero likelihood p({psi}|{z}) under positive recognition mass")]
    ZeroLikelihood { psi: String, z: String },

    #[error("slot {0} has no observations")]
    EmptySlot(usize),

    #[error("composition expects {expected} children, got {actual}")]
    ArityMismatch { expected: usize, actual: usize },

    #[error("KL term undefined at t={t}, level={level}: {detail}")]
    LossTermUndefined { t: usize, level: usize, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
