use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::mfg::{Equilibrium, IterationRecord};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("coordinate {value} outside [0, 1)")]
    Domain { value: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("mass mismatch {diff:e} exceeds tolerance {tol:e}")]
    MassMismatch { diff: f64, tol: f64 },

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("entropic transport did not converge: marginal error {marginal_error:e}, duality gap {gap:e}")]
    TransportNotConverged { marginal_error: f64, gap: f64 },

    #[error("Hopf-Cole variable became non-positive at time step {step}")]
    NonPositive { step: usize },

    #[error("CFL condition needs {required} advection sub-steps per time step (limit {limit})")]
    Cfl { required: usize, limit: usize },

    #[error("mass drift {drift:e} at time step {step}")]
    MassDrift { step: usize, drift: f64 },

    #[error("clipped negative mass {clipped:e} exceeds budget {budget:e}")]
    ClipBudget { clipped: f64, budget: f64 },

    #[error("time {0} outside [0, T]")]
    TimeOutOfRange(f64),

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error("fixed-point iteration did not converge after {} iterations", .history.len())]
    NonConvergence {
        history: Vec<IterationRecord>,
        last: Box<Equilibrium>,
    },
}
