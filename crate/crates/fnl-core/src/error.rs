use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numerical blowup at step {step}: value {value}")]
    NumericalBlowup { step: usize, value: f64 },
    #[error("insufficient replications: need {needed}, got {got}")]
    InsufficientReplications { needed: usize, got: usize },
    #[error("size mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
    #[error("singular equilibrium: psi = {psi}")]
    SingularEquilibrium { psi: f64 },
    #[error("no convergence after {iterations} iterations (last change {last_change})")]
    NoConvergence { iterations: usize, last_change: f64 },
    #[error("invalid model: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
