use alloc::boxed::Box;
use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A pointwise quantity was requested outside its domain of definition.
    #[error("{quantity} undefined at r={r}, b={b}")]
    Domain { quantity: &'static str, r: f64, b: f64 },

    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("non-finite state after step at t={t}")]
    Unstable { t: f64 },

    #[error("step failed at t={t}: {source}")]
    StepFailed { t: f64, source: Box<Error> },

    #[error("stationarity not reached by t={t} (residual {residual:e})")]
    NotStationary { t: f64, residual: f64 },

    #[error("rejection sampling gave up after {attempts} draws")]
    RejectionBudget { attempts: usize },

    #[error("realization {index}: {source}")]
    Realization { index: usize, source: Box<Error> },

    #[error("proposal tuner diverged: acceptance {acceptance}, last std {std}")]
    TunerDiverged { acceptance: f64, std: f64 },

    #[error("fit window is empty")]
    EmptyWindow,
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
