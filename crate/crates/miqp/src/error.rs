use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("objective is unbounded below on the feasible set")]
    Unbounded,

    #[error("numerical failure after {attempts} attempts: {detail}")]
    NumericalFailure { attempts: usize, detail: String },

    #[error("solver backend `{0}` is not registered")]
    BackendUnavailable(String),

    #[error("backend `{backend}` failed: {detail}")]
    Backend { backend: String, detail: String },
}
