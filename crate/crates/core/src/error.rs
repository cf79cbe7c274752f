use thiserror::Error;

/// Error type shared by all modules.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated a mathematical precondition. The message names
    /// the violated bound.
    #[error("domain error: {0}")]
    Domain(String),

    /// A request was structurally invalid (unknown preset, kind/params
    /// mismatch, zero replicas, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric routine failed to converge or produced a non-finite value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Not enough usable data points for the requested estimator.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Conditioning on survival was abandoned because survival is too rare.
    #[error(
        "survival rate {rate:.3e} fell below 1e-3 after {attempts} attempts \
         ({successes} surviving runs); giving up"
    )]
    SurvivalTooRare {
        attempts: u64,
        successes: u64,
        rate: f64,
    },

    /// Pre-flight cost estimate exceeded the configured budget.
    #[error("cost guard: estimated {estimate:.3e} particle-steps exceeds budget {budget:.3e}")]
    BudgetExceeded { estimate: f64, budget: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
