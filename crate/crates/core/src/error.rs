use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("non-finite input at index {index}")]
    NonFinite { index: usize },

    #[error("variance at index {index} must be positive, got {value}")]
    NonPositiveVariance { index: usize, value: f64 },

    #[error("covariance entry ({row}, {col}) normalizes to {value}, outside [-1, 1]")]
    InvalidCovariance { row: usize, col: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: String, found: String },

    #[error("Gram matrix is singular or ill-conditioned (condition number {condition:e} > bound {bound:e})")]
    SingularPrecoder { condition: f64, bound: f64 },

    #[error("zero-forcing needs more antennas than users (M = {antennas}, K = {users})")]
    TooFewAntennas { antennas: f64, users: usize },

    #[error("closed-form rates need a positive pilot SNR")]
    ZeroPilotSnr,

    #[error("trial {trial}: precoder still singular after {attempts} redraws")]
    RedrawBudgetExhausted { trial: u64, attempts: u32 },

    #[error("target sum rate {target} is not reachable (one-bit asymptote {asymptote})")]
    UnreachableRate { target: f64, asymptote: f64 },

    #[error("search did not converge: {0}")]
    NonConvergence(String),

    #[error("total consumed power must be positive")]
    ZeroPower,

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("cannot write output: {0}")]
    Output(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the user's configuration rather than by a
    /// numerical or runtime failure.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::InvalidScenario(_) | Error::Json(_)
        )
    }
}
