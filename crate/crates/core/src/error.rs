use thiserror::Error;

use crate::trace::RunTrace;

/// Errors raised by problem construction, the cost ledger and the solvers.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("data error at line {line}: {message}")]
    Data { line: usize, message: String },

    #[error("invalid client selection: {0}")]
    InvalidSelection(String),

    #[error("accounting error: {0}")]
    Accounting(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A non-finite iterate or estimate appeared. Carries the trace recorded so far.
    #[error("divergence at iteration {iteration}: {reason}")]
    Divergence {
        iteration: usize,
        reason: String,
        trace: Box<RunTrace>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;

pub(crate) fn check_dim(x: &[f64], d: usize) -> Result<()> {
    if x.len() != d {
        return Err(SimError::InvalidInput(format!(
            "dimension mismatch: expected {d}, got {}",
            x.len()
        )));
    }
    Ok(())
}
