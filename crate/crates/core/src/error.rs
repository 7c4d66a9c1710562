//! Error type shared by every solver in the crate.
//!
//! Errors split into two classes: rejected inputs (bad parameters, malformed
//! networks, mismatched grids) and numerical failures raised mid-computation
//! (step budget exhausted, non-finite state, violated solution invariants).
//! The CLI maps the two classes to distinct exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("state budget exceeded: system needs {required} states, budget is {budget}")]
    StateBudget { required: usize, budget: usize },

    #[error("step budget exhausted at t = {t} after {steps} steps")]
    StepBudget { t: f64, steps: usize },

    #[error("non-finite value encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("fit domain error: {0}")]
    FitDomain(String),

    #[error("epsilon out of range: {0}")]
    EpsilonRange(String),

    #[error("solution invariant violated: {0}")]
    Invariant(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that arise during a computation that accepted its
    /// inputs; false for rejected inputs. Drives the CLI exit-code split.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepBudget { .. }
                | Error::NonFinite { .. }
                | Error::StepUnderflow { .. }
                | Error::Invariant(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
