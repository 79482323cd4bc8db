use thiserror::Error;

use crate::sim::SimTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} did not converge after {iterations} iterations (last update {last:.3e})")]
    SolverFailure {
        what: &'static str,
        iterations: usize,
        last: f64,
        history: Vec<f64>,
    },

    /// The explicit scheme produced a non-finite value. The trace recorded up
    /// to that point is kept for post-mortem inspection.
    #[error("simulation diverged at t = {time:.4}")]
    Divergence { time: f64, trace: Box<SimTrace> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
