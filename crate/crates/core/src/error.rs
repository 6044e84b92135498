use thiserror::Error;

use crate::model::UnitSystem;
use crate::simulator::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unit system mismatch: expected {expected:?}, found {found:?}")]
    UnitMismatch {
        expected: UnitSystem,
        found: UnitSystem,
    },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("positive equilibrium does not exist: u = {u} is not below u0 = {u0}")]
    NoPositiveEquilibrium { u: f64, u0: f64 },

    #[error("integration failed at t = {t}: {reason}")]
    IntegrationFailure {
        t: f64,
        reason: String,
        partial: Box<Trajectory>,
    },

    #[error("trajectory too short: {len} samples, need at least {needed}")]
    TrajectoryTooShort { len: usize, needed: usize },

    #[error("insufficient data: found {found} section crossings, need at least {needed}")]
    InsufficientData { found: usize, needed: usize },

    #[error("numerical instability: {0}")]
    NumericalInstability(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
