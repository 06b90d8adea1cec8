//! Large-queue asymptotics for heterogeneous multiserver queues.
//!
//! The crate is organised bottom-up:
//!
//! * [`distributions`]: parametric inter-arrival and service laws with exact
//!   samplers, moment generating functions (plain and truncated) and tail
//!   classification.
//! * [`rate_functions`]: roots of `e^θ F̂(v, x) = 1` and their limits, the
//!   exponents that make exponential test functions jump-neutral.
//! * [`asymptotics`]: the convex rate function γ, the tail decay rate α and
//!   the heavy-traffic / large-variance limit rates.
//! * [`simulator`]: exact event-driven simulation of the piecewise
//!   deterministic Markov process with simultaneous-event cascades.
//! * [`tilting`]: exponential change of measure and importance sampling of
//!   rare queue-length tails.

pub mod asymptotics;
pub mod distributions;
pub mod error;
pub mod ext;
pub mod model;
pub mod quadrature;
pub mod rate_functions;
pub mod rng;
pub mod simulator;
pub mod stats;
pub mod tilting;

pub use distributions::{BatchLaw, DistributionSpec, TailInfo};
pub use error::{NoRootReason, QaError, Result};
pub use ext::{ExtReal, Truncation};
pub use model::{ArrivalSpec, ModelConfig, QueueModel, SelectionRule};
pub use rng::RngStream;
