use thiserror::Error;

/// Errors produced by model construction, inference, and estimation.
#[derive(Error, Debug)]
pub enum PplsError {
    /// A covariance (sub)matrix was not positive definite where a solve was required.
    #[error("singular covariance in {context}: smallest eigenvalue {smallest_eigenvalue:.3e}")]
    SingularCovariance {
        context: String,
        smallest_eigenvalue: f64,
    },

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid index set: {reason}")]
    InvalidIndexSet { reason: String },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// The equal-row-norm constraint does not hold on the given loadings.
    #[error(
        "norm constraint violated at row {worst_row}: row norm of scaled loadings deviates from c by {deviation:.3e} (relative)"
    )]
    ConstraintViolated { worst_row: usize, deviation: f64 },

    /// Latent dimensions fail the identifiability conditions.
    #[error("model not identifiable: {}", reasons.join("; "))]
    NotIdentifiable { reasons: Vec<String> },

    #[error("rank-deficient matrix in {context}")]
    RankDeficient { context: String },

    /// No latent signal: every eigenvalue of the scaled loading block is zero.
    #[error("all eigenvalues are zero in {context}; no latent signal to rank")]
    NoSignal { context: String },

    #[error("data error: {reason}")]
    Data { reason: String },

    #[error("insufficient data: need at least {needed} usable rows, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// Optimization failed on every restart.
    #[error("fit failed: {reason}")]
    FitFailed { reason: String },

    #[error("serialization error: {0}")]
    Serde(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, PplsError>;

impl PplsError {
    pub(crate) fn data(reason: impl Into<String>) -> Self {
        PplsError::Data {
            reason: reason.into(),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        PplsError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
