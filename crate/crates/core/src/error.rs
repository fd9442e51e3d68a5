use thiserror::Error;

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("a state space needs at least two states, got {0}")]
    TooFewStates(usize),

    #[error("duplicate state label `{0}`")]
    DuplicateLabel(String),

    #[error("unknown state `{0}`")]
    UnknownState(String),

    #[error("target set must be a non-empty proper subset of the state space")]
    InvalidTarget,

    #[error("state index {index} out of range for {len} states")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("negative rate bound at ({row}, {col}): {value}")]
    NegativeBound { row: usize, col: usize, value: f64 },

    #[error("rate ({from}, {to}) = {value} lies outside [{lower}, {upper}]")]
    BoundViolation {
        from: usize,
        to: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },

    #[error("not a rate matrix: {0}")]
    NotRateMatrix(String),

    #[error("not a transition matrix: {0}")]
    NotTransitionMatrix(String),

    #[error("model is invalid:\n{0}")]
    Invalid(ValidationReport),

    #[error("step too large: (t/n)*norm = {0} exceeds 1")]
    StepSize(f64),

    #[error("linear system is singular or ill-posed: {0}")]
    Infeasible(String),

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("all {0} sample paths were censored; raise the horizon")]
    AllCensored(usize),
}
