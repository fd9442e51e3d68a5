//! Lower and upper expected hitting times for continuous-time Markov chains
//! whose rate matrix is only known to lie in an interval-bounded set.

pub mod diagnostics;
pub mod error;
pub mod hitting;
pub mod mc;
pub mod model;
pub mod ops;
pub mod random;
pub mod structure;

pub use error::{Error, Result};
pub use hitting::{
    convergence_study, precise_continuous, precise_discrete, residual, solve_bounds,
    solve_discretized, solve_policy_iteration, solve_value_iteration, ConvergenceStudy,
    DiscretizedOptions, HittingSolution, HittingTimeResult, Method, PolicyIterationOptions,
    StudySubject, ValueIterationOptions,
};
pub use model::{
    IntervalRateSet, Model, RateMatrix, StateSpace, TargetSet, TransitionMatrix, ValidatedModel,
    ValidationReport, ValueFunction, Violation,
};
pub use ops::{
    apply_lower, apply_upper, argmax_matrix, argmin_matrix, lower_exp, matrix_exp, upper_exp,
    EulerSemigroup, Operator, Orientation, RateOperator,
};
