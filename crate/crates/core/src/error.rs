use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no connected graph drawn after {attempts} attempts; parameters too sparse")]
    ConnectivityRetriesExhausted { attempts: usize },

    #[error("{what} did not converge after {iterations} iterations (last change {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// The implicit EDF step `1 - k ς θ_i (1 - p_k(i))` reached zero or below.
    #[error("EDF denominator {value:e} <= 0 at degree {degree}, buffer index {index}")]
    EdfDenominator { degree: u32, index: usize, value: f64 },

    #[error("singular right-hand side at x = {x} (denominator {value:e})")]
    Singularity { x: f64, value: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("{what} exceeds enumeration budget {budget}")]
    BudgetExceeded { what: &'static str, budget: u64 },

    #[error("horizon {horizon} exhausted before stationarity (derivative norm {residual:e})")]
    HorizonExhausted { horizon: f64, residual: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
