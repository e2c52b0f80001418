use thiserror::Error;

/// Errors raised by model construction, the solver and the estimators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("negative probability {value} at {location}")]
    NegativeProbability { location: String, value: f64 },

    #[error("probability table sums to {sum} (deviation from 1 must be below 1e-9)")]
    SumNotOne { sum: f64 },

    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid distortion {value} in {table} at ({row}, {col})")]
    InvalidDistortion {
        table: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("covariance matrix for class {class} is not positive definite (det = {det})")]
    NonPositiveDefinite { class: usize, det: f64 },

    #[error("({what}) has zero probability: {detail}")]
    OutOfSupport { what: &'static str, detail: String },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("test-channel row for x index {x} has no admissible u")]
    AllZeroRow { x: usize },

    #[error("solver collapsed numerically: {0}")]
    NumericalCollapse(String),

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eigenvalue})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("race table of {required} entries exceeds the enumeration budget of {budget}")]
    BudgetExceeded { required: u128, budget: u64 },

    #[error("conditional row for {side} symbol {index} has no mass")]
    NoSupport { side: &'static str, index: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
