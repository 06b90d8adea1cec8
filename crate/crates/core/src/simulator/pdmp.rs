//! The piecewise deterministic Markov process `X(t) = (L(t), J(t), R(t))`
//! and its exact event-driven evolution.

use serde::Serialize;

use crate::error::{QaError, Result};
use crate::model::{ArrivalSpec, QueueModel, SelectionRule};
use crate::rng::RngStream;

/// Residuals below this after a drift step are treated as exact zeros, so
/// that coinciding event times are detected as simultaneous.
pub const SNAP_TOL: f64 = 1e-12;
/// Largest number of cascade rounds allowed at a single time instant.
pub const MAX_CASCADE_ROUNDS: usize = 1_000_000;

/// Queue length, busy servers and residual times.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PdmpState {
    /// Number of customers in the system, `L(t)`.
    pub ell: u64,
    /// `busy[i]` iff server `i` is serving, i.e. `i ∈ J(t)`.
    pub busy: Vec<bool>,
    /// Residual inter-arrival time per arrival stream.
    pub arrival_residuals: Vec<f64>,
    /// Residual service time per server; zero for idle servers.
    pub service_residuals: Vec<f64>,
    pub clock: f64,
}

impl PdmpState {
    pub fn busy_count(&self) -> usize {
        self.busy.iter().filter(|b| **b).count()
    }

    /// Time until the next residual reaches zero.
    pub fn time_to_next_event(&self) -> f64 {
        let mut dt = f64::INFINITY;
        for &y in &self.arrival_residuals {
            dt = dt.min(y);
        }
        for (i, &y) in self.service_residuals.iter().enumerate() {
            if self.busy[i] {
                dt = dt.min(y);
            }
        }
        dt
    }
}

/// What happened at one jump instant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JumpRecord {
    /// `X(t−)`: the state at the jump instant before any update.
    pub pre: PdmpState,
    /// `X(t)`: the state after the full cascade.
    pub post: PdmpState,
    pub summary: JumpSummary,
}

/// Counters of one jump instant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct JumpSummary {
    /// Cascade rounds processed (at least one).
    pub rounds: usize,
    /// Customers that arrived (batch sizes summed).
    pub arrivals: u64,
    pub departures: u64,
    /// Services started, including zero-length ones.
    pub starts: u64,
}

/// Source of fresh inter-arrival times, batch sizes and service times.
pub trait Dynamics {
    fn arrival_time(&mut self, stream: usize, rng: &mut RngStream) -> f64;
    fn batch_size(&mut self, rng: &mut RngStream) -> u64;
    fn service_time(&mut self, server: usize, rng: &mut RngStream) -> f64;
}

/// Draws from the model's own laws.
#[derive(Debug, Clone, Copy)]
pub struct BaseDynamics<'m> {
    pub model: &'m QueueModel,
}

impl Dynamics for BaseDynamics<'_> {
    fn arrival_time(&mut self, stream: usize, rng: &mut RngStream) -> f64 {
        match &self.model.arrival {
            ArrivalSpec::Single { law } | ArrivalSpec::Batch { law, .. } => law.sample(rng),
            ArrivalSpec::Superposed { laws } => laws[stream].sample(rng),
        }
    }

    fn batch_size(&mut self, rng: &mut RngStream) -> u64 {
        match &self.model.arrival {
            ArrivalSpec::Batch { batch, .. } => batch.sample(rng),
            _ => 1,
        }
    }

    fn service_time(&mut self, server: usize, rng: &mut RngStream) -> f64 {
        self.model.services[server].sample(rng)
    }
}

/// Event-driven simulator of the queue's PDMP.
#[derive(Debug, Clone)]
pub struct Simulator<'m> {
    pub model: &'m QueueModel,
    pub state: PdmpState,
    pub rng: RngStream,
    /// Total customers arrived / departed since construction.
    pub arrivals: u64,
    pub departures: u64,
    pub events: u64,
    order: Vec<usize>,
    free: Vec<usize>,
}

impl<'m> Simulator<'m> {
    /// An empty system whose arrival clocks start with fresh draws.
    pub fn new(model: &'m QueueModel, rng: RngStream) -> Self {
        let mut sim = Self::with_state(model, rng, empty_state(model));
        let mut dynamics = BaseDynamics { model };
        for j in 0..sim.state.arrival_residuals.len() {
            sim.state.arrival_residuals[j] = dynamics.arrival_time(j, &mut sim.rng);
        }
        sim
    }

    /// A simulator starting from a given state.
    pub fn with_state(model: &'m QueueModel, rng: RngStream, state: PdmpState) -> Self {
        let mut order: Vec<usize> = (0..model.k).collect();
        if model.selection == SelectionRule::FastestFirst {
            let rates = model.service_rates();
            order.sort_by(|a, b| rates[*b].total_cmp(&rates[*a]).then(a.cmp(b)));
        }
        Simulator {
            model,
            state,
            rng,
            arrivals: 0,
            departures: 0,
            events: 0,
            order,
            free: Vec::with_capacity(model.k),
        }
    }

    /// Drifts to the next event instant and applies the jump cascade with the
    /// model's own laws, returning pre- and post-jump states.
    pub fn advance(&mut self) -> Result<JumpRecord> {
        let model = self.model;
        let mut pre = None;
        let summary = self.step(&mut BaseDynamics { model }, |s, _| {
            pre = Some(s.clone());
        }, true)?;
        let mut pre = pre.expect("drift callback runs once per step");
        let dt = pre.time_to_next_event();
        drift(&mut pre, dt);
        Ok(JumpRecord {
            pre,
            post: self.state.clone(),
            summary,
        })
    }

    /// One event: `on_drift(state, dt)` sees the state at the start of the
    /// deterministic segment and its length, then the jump at its end is
    /// applied. With `check` set, the post-cascade invariants are asserted.
    pub fn step<D: Dynamics, F: FnMut(&PdmpState, f64)>(
        &mut self,
        dynamics: &mut D,
        mut on_drift: F,
        check: bool,
    ) -> Result<JumpSummary> {
        let dt = self.state.time_to_next_event();
        on_drift(&self.state, dt);
        drift(&mut self.state, dt);
        let summary = self.cascade(dynamics)?;
        self.events += 1;
        if check || cfg!(debug_assertions) {
            self.check_invariants();
        }
        Ok(summary)
    }

    /// Applies the jump at the current instant: all zero residuals fire,
    /// customers are (re)assigned to free servers, fresh times are drawn,
    /// and the procedure repeats while new zeros appear.
    pub fn cascade<D: Dynamics>(&mut self, dynamics: &mut D) -> Result<JumpSummary> {
        let mut summary = JumpSummary::default();
        let k = self.model.k;
        loop {
            let mut fired = false;
            let mut arrived = 0u64;
            for j in 0..self.state.arrival_residuals.len() {
                if self.state.arrival_residuals[j] == 0.0 {
                    fired = true;
                    arrived += dynamics.batch_size(&mut self.rng);
                    self.state.arrival_residuals[j] = dynamics.arrival_time(j, &mut self.rng);
                }
            }
            let mut departed = 0u64;
            for i in 0..k {
                if self.state.busy[i] && self.state.service_residuals[i] == 0.0 {
                    fired = true;
                    departed += 1;
                    self.state.busy[i] = false;
                }
            }
            if !fired {
                break;
            }
            summary.rounds += 1;
            if summary.rounds > MAX_CASCADE_ROUNDS {
                return Err(QaError::CascadeOverflow(MAX_CASCADE_ROUNDS));
            }
            self.state.ell = self.state.ell + arrived - departed;
            summary.arrivals += arrived;
            summary.departures += departed;
            self.arrivals += arrived;
            self.departures += departed;

            let busy = self.state.busy_count() as u64;
            let waiting = self.state.ell - busy;
            if waiting > 0 {
                self.free.clear();
                for &i in &self.order {
                    if !self.state.busy[i] {
                        self.free.push(i);
                    }
                }
                let n = (waiting as usize).min(self.free.len());
                if self.model.selection == SelectionRule::UniformRandom {
                    // Partial Fisher–Yates: the first n entries are a uniform subset.
                    for a in 0..n {
                        let b = a + self.rng.below(self.free.len() - a);
                        self.free.swap(a, b);
                    }
                }
                for a in 0..n {
                    let i = self.free[a];
                    self.state.busy[i] = true;
                    self.state.service_residuals[i] = dynamics.service_time(i, &mut self.rng);
                    summary.starts += 1;
                }
            }
        }
        Ok(summary)
    }

    fn check_invariants(&self) {
        let s = &self.state;
        let busy = s.busy_count() as u64;
        assert_eq!(busy, s.ell.min(self.model.k as u64), "busy servers must equal min(L, k)");
        for (i, &y) in s.service_residuals.iter().enumerate() {
            if s.busy[i] {
                assert!(y > 0.0, "busy server with zero residual after cascade");
            } else {
                assert_eq!(y, 0.0, "idle server with nonzero residual");
            }
        }
        assert!(s.arrival_residuals.iter().all(|&y| y > 0.0));
    }
}

/// The empty system with all clocks at zero.
pub fn empty_state(model: &QueueModel) -> PdmpState {
    PdmpState {
        ell: 0,
        busy: vec![false; model.k],
        arrival_residuals: vec![0.0; model.arrival.streams().len()],
        service_residuals: vec![0.0; model.k],
        clock: 0.0,
    }
}

/// Moves every active residual down by `dt`, snapping tiny remainders to 0.
pub fn drift(state: &mut PdmpState, dt: f64) {
    if dt == 0.0 {
        return;
    }
    state.clock += dt;
    for y in state.arrival_residuals.iter_mut() {
        *y = snap(*y - dt);
    }
    for (i, y) in state.service_residuals.iter_mut().enumerate() {
        if state.busy[i] {
            *y = snap(*y - dt);
        }
    }
}

fn snap(y: f64) -> f64 {
    if y < SNAP_TOL {
        0.0
    } else {
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{BatchLaw, DistributionSpec};

    fn det(d: f64) -> DistributionSpec {
        DistributionSpec::Deterministic { value: d }
    }

    #[test]
    fn dd1_departure_then_idle() {
        let m = QueueModel::single(det(2.0), vec![det(1.0)]).unwrap();
        let state = PdmpState {
            ell: 1,
            busy: vec![true],
            arrival_residuals: vec![0.5],
            service_residuals: vec![0.3],
            clock: 0.0,
        };
        let mut sim = Simulator::with_state(&m, RngStream::new(1), state);
        let rec = sim.advance().unwrap();
        assert!((rec.post.clock - 0.3).abs() < 1e-15);
        assert_eq!(rec.post.ell, 0);
        assert_eq!(rec.post.busy, vec![false]);
        assert_eq!(rec.summary.departures, 1);
        assert!((rec.post.arrival_residuals[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn simultaneous_arrival_and_departure_keeps_length() {
        let m = QueueModel::single(det(2.0), vec![det(1.0)]).unwrap();
        let state = PdmpState {
            ell: 1,
            busy: vec![true],
            arrival_residuals: vec![0.4],
            service_residuals: vec![0.4],
            clock: 0.0,
        };
        let mut sim = Simulator::with_state(&m, RngStream::new(1), state);
        let rec = sim.advance().unwrap();
        assert_eq!(rec.post.ell, 1);
        assert_eq!(rec.summary.arrivals, 1);
        assert_eq!(rec.summary.departures, 1);
        assert_eq!(rec.post.busy, vec![true]);
        assert_eq!(rec.post.service_residuals, vec![1.0]);
        assert_eq!(rec.post.arrival_residuals, vec![2.0]);
    }

    #[test]
    fn zero_service_times_cascade() {
        let svc = DistributionSpec::PointMassMix {
            p0: 0.3,
            rest: Box::new(det(0.1)),
        };
        let arrival = ArrivalSpec::Batch {
            law: det(1.0),
            batch: BatchLaw::Deterministic { size: 3 },
        };
        let m = QueueModel::new(arrival, vec![svc], SelectionRule::LowestIndex).unwrap();
        let mut sim = Simulator::new(&m, RngStream::new(11));
        let dyns = &mut BaseDynamics { model: &m };
        let (mut batches, mut instant) = (0u64, 0u64);
        for _ in 0..100_000 {
            let rec = sim.step(dyns, |_, _| {}, true).unwrap();
            if rec.arrivals > 0 {
                batches += 1;
                instant += rec.departures;
            }
        }
        // The server is idle at every batch arrival; zero-length services
        // complete within the arrival cascade, stopping at the first positive one.
        let per = instant as f64 / batches as f64;
        let expected = 0.3 + 0.09 + 0.027;
        assert!((per - expected).abs() < 0.01, "{per}");
        assert_eq!(sim.arrivals, 3 * batches);
    }
}
