//! Long-run time averages of the queue length and of the test-function
//! functionals Φ, with batch-means standard errors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{QaError, Result};
use crate::model::QueueModel;
use crate::rng::RngStream;
use crate::stats::ratio_se;

use super::pdmp::{BaseDynamics, Simulator};
use super::test_function::{PhiIntegrals, TestFunction};

/// A `(v, θ)` pair at which the Φ functionals are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiProbe {
    pub v: f64,
    pub theta: f64,
}

#[derive(Debug, Clone)]
pub struct StationaryConfig {
    /// Total events over all replications, warmup included.
    pub horizon_events: u64,
    /// Warmup events per replication; `None` uses the default rule.
    pub warmup_events: Option<u64>,
    pub replications: usize,
    /// Batches per replication for standard errors.
    pub batches: usize,
    pub probes: Vec<PhiProbe>,
}

impl StationaryConfig {
    pub fn new(horizon_events: u64) -> Self {
        StationaryConfig {
            horizon_events,
            warmup_events: None,
            replications: 1,
            batches: 64,
            probes: Vec::new(),
        }
    }

    pub fn with_probes(mut self, probes: Vec<PhiProbe>) -> Self {
        self.probes = probes;
        self
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications.max(1);
        self
    }
}

/// Sums collected over one batch of events.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSums {
    pub time: f64,
    /// Time spent at each level `L = ℓ`.
    pub level_time: Vec<f64>,
    /// Φ integrals per probe, scaled by `e^{−θk}`.
    pub phi: Vec<PhiIntegrals>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StationaryEstimate {
    pub k: usize,
    pub probes: Vec<PhiProbe>,
    pub batches: Vec<BatchSums>,
    /// Post-warmup events.
    pub events: u64,
    pub total_time: f64,
    /// Completed regeneration cycles (down-crossings from level `k` to
    /// `k − 1`) after warmup.
    pub cycles: u64,
    /// Customers arrived and departed after warmup, and the queue length at
    /// the start and end of the measured stretch, summed over replications.
    pub arrivals: u64,
    pub departures: u64,
    pub start_ell: u64,
    pub end_ell: u64,
}

/// Φ estimates at one probe, unscaled, with standard errors.
#[derive(Debug, Clone, Serialize)]
pub struct PhiEstimate {
    pub v: f64,
    pub theta: f64,
    pub phi: (f64, f64),
    pub arrival: Vec<(f64, f64)>,
    pub server: Vec<(f64, f64)>,
    pub idle: Vec<(f64, f64)>,
}

impl StationaryEstimate {
    fn times(&self) -> Vec<f64> {
        self.batches.iter().map(|b| b.time).collect()
    }

    fn level(&self, b: &BatchSums, ell: usize) -> f64 {
        b.level_time.get(ell).copied().unwrap_or(0.0)
    }

    pub fn max_level(&self) -> usize {
        self.batches.iter().map(|b| b.level_time.len()).max().unwrap_or(1) - 1
    }

    /// Time-average `P(L = ℓ)` with standard error, for `ℓ = 0..=max_level`.
    pub fn pmf(&self) -> Vec<(f64, f64)> {
        let t = self.times();
        (0..=self.max_level())
            .map(|ell| {
                let x: Vec<f64> = self.batches.iter().map(|b| self.level(b, ell)).collect();
                ratio_se(&x, &t)
            })
            .collect()
    }

    /// Time-average `P(L > x)` with standard error.
    pub fn tail(&self, x: usize) -> (f64, f64) {
        let t = self.times();
        let above: Vec<f64> = self
            .batches
            .iter()
            .map(|b| b.level_time.iter().skip(x + 1).sum())
            .collect();
        ratio_se(&above, &t)
    }

    /// Per-batch values of `P(L > x)` (used for jackknife fits).
    pub fn batch_tails(&self, x: usize) -> Vec<f64> {
        self.batches
            .iter()
            .map(|b| b.level_time.iter().skip(x + 1).sum::<f64>() / b.time)
            .collect()
    }

    /// Mean length of a regeneration cycle.
    pub fn mean_cycle_length(&self) -> f64 {
        if self.cycles == 0 {
            f64::INFINITY
        } else {
            self.total_time / self.cycles as f64
        }
    }

    pub(crate) fn probe_index(&self, v: f64, theta: f64) -> Result<usize> {
        self.probes
            .iter()
            .position(|p| p.v == v && p.theta == theta)
            .ok_or(QaError::MissingProbe { v, theta })
    }

    pub fn phi(&self, v: f64, theta: f64) -> Result<PhiEstimate> {
        let j = self.probe_index(v, theta)?;
        let t = self.times();
        let scale = (theta * self.k as f64).exp();
        let est = |f: &dyn Fn(&PhiIntegrals) -> f64| {
            let x: Vec<f64> = self.batches.iter().map(|b| f(&b.phi[j])).collect();
            let (r, se) = ratio_se(&x, &t);
            (r * scale, se * scale)
        };
        let streams = self.batches[0].phi[j].arrival.len();
        Ok(PhiEstimate {
            v,
            theta,
            phi: est(&|p| p.phi),
            arrival: (0..streams).map(|s| est(&|p| p.arrival[s])).collect(),
            server: (0..self.k).map(|i| est(&|p| p.server[i])).collect(),
            idle: (0..self.k).map(|i| est(&|p| p.idle[i])).collect(),
        })
    }
}

/// Simulates the stationary regime and accumulates time averages.
///
/// The warmup ends after `warmup_events` events, or by default after
/// whichever comes first of 10% of the replication's events and 1000
/// completed regeneration cycles.
pub fn run_stationary(model: &QueueModel, config: &StationaryConfig, seed: u64) -> Result<StationaryEstimate> {
    model.ensure_stable()?;
    let functions: Vec<TestFunction> = config
        .probes
        .iter()
        .map(|p| TestFunction::new(model, p.v, p.theta))
        .collect::<Result<_>>()?;
    let reps = config.replications.max(1);
    let per_rep = config.horizon_events / reps as u64;
    let runs: Vec<Result<Replication>> = (0..reps)
        .into_par_iter()
        .map(|r| run_replication(model, config, &functions, per_rep, RngStream::for_replication(seed, r as u64)))
        .collect();
    let mut est = StationaryEstimate {
        k: model.k,
        probes: config.probes.clone(),
        batches: Vec::new(),
        events: 0,
        total_time: 0.0,
        cycles: 0,
        arrivals: 0,
        departures: 0,
        start_ell: 0,
        end_ell: 0,
    };
    for run in runs {
        let run = run?;
        est.events += run.events;
        est.cycles += run.cycles;
        est.arrivals += run.arrivals;
        est.departures += run.departures;
        est.start_ell += run.start_ell;
        est.end_ell += run.end_ell;
        est.total_time += run.batches.iter().map(|b| b.time).sum::<f64>();
        est.batches.extend(run.batches);
    }
    Ok(est)
}

struct Replication {
    batches: Vec<BatchSums>,
    events: u64,
    cycles: u64,
    arrivals: u64,
    departures: u64,
    start_ell: u64,
    end_ell: u64,
}

fn run_replication(
    model: &QueueModel,
    config: &StationaryConfig,
    functions: &[TestFunction],
    events: u64,
    rng: RngStream,
) -> Result<Replication> {
    let k = model.k as u64;
    let mut sim = Simulator::new(model, rng);
    let mut dynamics = BaseDynamics { model };
    let warmup_cap = config.warmup_events.unwrap_or(events / 10);
    let mut warm_cycles = 0u64;
    let mut done = 0u64;
    while done < warmup_cap {
        let before = sim.state.ell;
        sim.step(&mut dynamics, |_, _| {}, false)?;
        done += 1;
        if config.warmup_events.is_none() && before >= k && sim.state.ell < k {
            warm_cycles += 1;
            if warm_cycles >= 1000 {
                break;
            }
        }
    }
    let measured = events.saturating_sub(done);
    let nb = config.batches.max(1) as u64;
    let per_batch = (measured / nb).max(1);
    let streams = model.arrival.streams().len();
    let start_ell = sim.state.ell;
    let (a0, d0) = (sim.arrivals, sim.departures);
    let mut cycles = 0u64;
    let mut batches = Vec::with_capacity(nb as usize);
    for _ in 0..nb {
        let mut b = BatchSums {
            time: 0.0,
            level_time: Vec::new(),
            phi: functions.iter().map(|_| PhiIntegrals::new(streams, model.k)).collect(),
        };
        for _ in 0..per_batch {
            let before = sim.state.ell;
            sim.step(
                &mut dynamics,
                |s, dt| {
                    b.time += dt;
                    let ell = s.ell as usize;
                    if ell >= b.level_time.len() {
                        b.level_time.resize(ell + 1, 0.0);
                    }
                    b.level_time[ell] += dt;
                    for (f, acc) in functions.iter().zip(b.phi.iter_mut()) {
                        f.integrate_drift(s, dt, acc);
                    }
                },
                false,
            )?;
            if before >= k && sim.state.ell < k {
                cycles += 1;
            }
        }
        batches.push(b);
    }
    Ok(Replication {
        events: per_batch * nb,
        cycles,
        arrivals: sim.arrivals - a0,
        departures: sim.departures - d0,
        start_ell,
        end_ell: sim.state.ell,
        batches,
    })
}
