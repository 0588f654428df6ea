use thiserror::Error;

use crate::qvi::QviSolveReport;
use crate::timegrid::GridFunction;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("degenerate set: {0}")]
    DegenerateSet(String),

    #[error("{what} did not converge after {iterations} iterations (residuals {residuals:?})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residuals: Vec<f64>,
        last: Box<GridFunction>,
    },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate economy: {0}")]
    DegenerateEconomy(String),

    #[error("inner solve failed for agents {failing_agents:?} (residuals {residuals:?})")]
    GammaEvaluation {
        failing_agents: Vec<usize>,
        residuals: Vec<f64>,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error(
        "no radius in {radii:?} produced an interior solution; try a larger coercivity radius"
    )]
    TruncationExhausted {
        radii: Vec<f64>,
        last: Option<Box<QviSolveReport>>,
    },
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
