//! Exact simulation of the queue's piecewise deterministic Markov process
//! and the estimators built on it.

pub(crate) mod cycle;
mod fit;
mod pdmp;
mod stationary;
mod test_function;
mod validate;

pub use cycle::{cycle_tail_estimate, CycleEstimate};
pub use fit::{empirical_decay_fit, DecayFit};
pub use pdmp::{
    drift, empty_state, BaseDynamics, Dynamics, JumpRecord, JumpSummary, PdmpState, Simulator, MAX_CASCADE_ROUNDS,
    SNAP_TOL,
};
pub use stationary::{run_stationary, BatchSums, PhiEstimate, PhiProbe, StationaryConfig, StationaryEstimate};
pub use test_function::{PhiIntegrals, TestFunction};
pub use validate::{validate_stationary_equation, validate_terminal_condition, ProbeReport};
