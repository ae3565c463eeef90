use thiserror::Error;

/// Errors produced anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid modulus q = {0} (need q >= 2)")]
    InvalidModulus(i64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("walk kind {0} has no closed-form characteristic function")]
    UnsupportedClosedForm(String),

    #[error("correlation matrix is singular")]
    SingularCorrelation,

    #[error("invalid time t = {0} (need t >= 0 and finite)")]
    InvalidTime(f64),

    #[error("problem too large: {what} needs {needed} points, budget is {budget}")]
    TooLarge {
        what: &'static str,
        needed: u128,
        budget: u128,
    },

    #[error("invalid regime: {0}")]
    InvalidRegime(String),

    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("kernel normalization failed: {0}")]
    Normalization(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::TooLarge { .. } => 2,
            LabError::Normalization(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
