use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {what} (condition estimate {condition:.3e})")]
    NumericalFailure { what: String, condition: f64 },

    #[error("singular evaluation: {0}")]
    Singularity(String),

    #[error("internal consistency check failed: {0}")]
    InternalConsistency(String),

    #[error(
        "pulse optimization stopped after {iterations} iterations without reaching the target \
         (best infidelity {best_infidelity:.3e})"
    )]
    Convergence { iterations: usize, best_infidelity: f64 },

    #[error("integration failure: {0}")]
    Integration(String),

    #[error("fit failure: {reason} (best negative log-likelihood {best_nll:.6e})")]
    FitFailure { reason: String, best_nll: f64 },

    #[error("no spectral peaks above noise floor {floor:.3e}")]
    NoPeaks { floor: f64 },

    #[error("inconsistent input: {0}")]
    InconsistentInput(String),

    #[error("eigenvalue selection failed: {0}")]
    SelectionFailure(String),

    #[error("malformed {path}: {reason}")]
    Format { path: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
