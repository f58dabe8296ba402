use thiserror::Error;

use crate::lbfgs::Status;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("vertex enumeration exceeded the budget of {budget} vertices")]
    VertexBudgetExceeded { budget: usize },

    #[error("matrix A is not positive definite (eigenvalues in [{min:e}, {max:e}])")]
    NotPositiveDefinite { min: f64, max: f64 },

    #[error("all {starts} online starts failed")]
    AllStartsFailed { starts: usize, statuses: Vec<Status> },

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
