//! Monte-Carlo checks of the stationary equation and of the jump-neutrality
//! (terminal condition) of the exponential test function.

use serde::Serialize;

use crate::error::Result;
use crate::model::QueueModel;
use crate::rng::RngStream;
use crate::stats::{ratio_se, MeanVar};

use super::pdmp::{drift, BaseDynamics, Simulator};
use super::stationary::StationaryEstimate;
use super::test_function::TestFunction;

/// Outcome of one validation probe.
#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub kind: &'static str,
    pub v: f64,
    pub theta: f64,
    pub residual: f64,
    pub se: f64,
    pub z: f64,
    /// `|z| <= 3`.
    pub pass: bool,
}

impl ProbeReport {
    fn new(kind: &'static str, v: f64, theta: f64, residual: f64, se: f64) -> Self {
        let z = if residual == 0.0 { 0.0 } else { residual / se };
        ProbeReport {
            kind,
            v,
            theta,
            residual,
            se,
            z,
            pass: z.abs() <= 3.0,
        }
    }
}

/// Residual of `η Φ₀ + Σᵢ ζᵢ Φᵢ − Σᵢ ζᵢ Φᵢ,₀` with its batch-means error,
/// for a probe recorded in `est`.
pub fn validate_stationary_equation(model: &QueueModel, v: f64, theta: f64, est: &StationaryEstimate) -> Result<ProbeReport> {
    let j = est.probe_index(v, theta)?;
    let tf = TestFunction::new(model, v, theta)?;
    let per_batch: Vec<f64> = est
        .batches
        .iter()
        .map(|b| {
            let p = &b.phi[j];
            let mut r = 0.0;
            for (e, a) in tf.eta.iter().zip(&p.arrival) {
                r += e * a;
            }
            for i in 0..model.k {
                r += tf.zeta[i] * (p.server[i] - p.idle[i]);
            }
            r
        })
        .collect();
    let times: Vec<f64> = est.batches.iter().map(|b| b.time).collect();
    let (r, se) = ratio_se(&per_batch, &times);
    let scale = (theta * model.k as f64).exp();
    Ok(ProbeReport::new("stationary", v, theta, r * scale, se * scale))
}

/// Mean relative jump increment `f(X(t))/f(X(t−)) − 1` of the test function
/// over `jumps` jump instants (after a warmup of `jumps / 10`). Jump
/// neutrality makes each increment conditionally centred given the pre-jump
/// state, so the increments are martingale differences and their plain
/// standard error is valid.
pub fn validate_terminal_condition(model: &QueueModel, jumps: u64, v: f64, theta: f64, seed: u64) -> Result<ProbeReport> {
    let tf = TestFunction::new(model, v, theta)?;
    let mut sim = Simulator::new(model, RngStream::new(seed));
    let mut dynamics = BaseDynamics { model };
    for _ in 0..jumps / 10 {
        sim.step(&mut dynamics, |_, _| {}, false)?;
    }
    let mut acc = MeanVar::default();
    for _ in 0..jumps {
        let mut pre = sim.state.clone();
        let dt = pre.time_to_next_event();
        drift(&mut pre, dt);
        sim.step(&mut dynamics, |_, _| {}, false)?;
        let inc = (tf.log_scaled(&sim.state) - tf.log_scaled(&pre)).exp_m1();
        acc.push(inc);
    }
    Ok(ProbeReport::new("terminal", v, theta, acc.mean, acc.se()))
}
