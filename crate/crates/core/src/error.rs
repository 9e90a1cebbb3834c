use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error("bucket index {0} out of range (0..=4)")]
    BadBucket(usize),

    #[error("unknown solver `{0}`")]
    UnknownSolver(String),

    #[error("enumeration needs {required:.3e} evaluations, budget is {budget:.3e}")]
    BudgetExceeded { required: f64, budget: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no feasible decision: {0}")]
    Infeasible(String),

    #[error("no JSON object found in backend output")]
    NoJsonObject,

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Failure of a remote completion or embedding service.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },

    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },

    #[error("endpoint returned HTTP {status}: {body}")]
    Status { status: u16, body: String },

    #[error("malformed response: {0}")]
    Protocol(String),

    #[error("backend not configured: {0}")]
    NotConfigured(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport { .. } | BackendError::Timeout { .. } => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}
