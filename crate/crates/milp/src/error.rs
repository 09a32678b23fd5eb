use thiserror::Error;

use crate::solution::Solution;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("variable {var}: invalid bounds [{lower}, {upper}]")]
    InvalidBounds { var: String, lower: f64, upper: f64 },
    #[error("{owner}: references unknown variable index {index}")]
    UnknownVariable { owner: String, index: usize },
    #[error("{owner}: non-finite coefficient")]
    NonFinite { owner: String },
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("model is infeasible; conflicting constraints: {}", hints.join(", "))]
    Infeasible { hints: Vec<String> },
    #[error("model is unbounded")]
    Unbounded,
    #[error("time or node limit reached before the gap closed")]
    Timeout { incumbent: Option<Box<Solution>> },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("backend failure: {0}")]
    Backend(String),
}
