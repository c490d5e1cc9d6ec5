use thiserror::Error;

use crate::stopping::StoppingDiagnostics;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("symmetric eigensolver did not converge (n = {n})")]
    EigenNoConvergence { n: usize },

    /// The stopping rule never crossed within the search horizon. The trace
    /// collected so far is attached.
    #[error("{rule:?} stopping rule: horizon of {t_max} iterations exhausted without a crossing")]
    HorizonExhausted {
        rule: crate::stopping::RuleKind,
        t_max: usize,
        diagnostics: Box<StoppingDiagnostics>,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn ensure_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
