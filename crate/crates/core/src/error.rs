use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("matrix is not Hermitian (max defect {defect:.3e})")]
    HermiticityViolation { defect: f64 },

    #[error("matrix is not unitary (max defect {defect:.3e})")]
    NotUnitary { defect: f64 },

    #[error("{algorithm} permanent is limited to n <= {limit}, got n = {n}")]
    SizeLimit {
        algorithm: &'static str,
        n: usize,
        limit: usize,
    },

    #[error("invalid multiset: {0}")]
    InvalidMultiset(String),

    #[error("invalid power vector: {0}")]
    InvalidPower(String),

    #[error("shape mismatch: expected length {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("invalid heater subset: {0}")]
    InvalidSubset(String),

    #[error("enumeration too large: {0} outcomes")]
    EnumerationTooLarge(u128),

    #[error("invalid fold: expected {expected} photons, got {got}")]
    InvalidFold { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("inconsistent counts: {0}")]
    InconsistentCounts(String),

    #[error("invalid min-entropy {0}; expected 0 < h_min <= 1")]
    InvalidEntropy(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
