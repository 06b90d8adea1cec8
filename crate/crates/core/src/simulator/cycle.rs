//! Conditional tail probabilities from excursions of `L` above level `k`.
//!
//! Time with `L >= k` splits into excursions that start when `L` reaches
//! `k` from below and end at the next down-crossing below `k`. Summing over
//! excursions, `P(L >= ℓ | L >= k)` is the time spent at or above `ℓ`
//! divided by the total excursion time.

use serde::Serialize;

use crate::error::{QaError, Result};
use crate::model::QueueModel;
use crate::rng::RngStream;
use crate::stats::jackknife;

use super::pdmp::{BaseDynamics, Simulator};

/// Fewest completed cycles accepted by the cycle estimators.
pub const MIN_CYCLES: usize = 30;
const MAX_GROUPS: usize = 100;

#[derive(Debug, Clone, Serialize)]
pub struct CycleEstimate {
    pub level: usize,
    pub estimate: f64,
    pub se: f64,
    /// 95% normal confidence interval from the jackknife standard error.
    pub ci: (f64, f64),
    pub cycles: usize,
    pub mean_cycle_length: f64,
    /// Events simulated, warmup included.
    pub events: u64,
}

/// Per-excursion totals: length and time spent at or above each level.
#[derive(Debug, Clone)]
pub(crate) struct Excursion {
    pub length: f64,
    pub above: Vec<f64>,
}

/// Ratio estimate with jackknife error over groups of consecutive excursions.
pub(crate) fn ratio_from_groups(num: &[f64], den: &[f64]) -> (f64, f64) {
    let groups: Vec<(f64, f64)> = num.iter().cloned().zip(den.iter().cloned()).collect();
    jackknife(&groups, |it| {
        let (a, b) = it.fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        a / b
    })
}

pub(crate) fn group_sums(values: &[f64], groups: usize) -> Vec<f64> {
    let n = values.len();
    (0..groups)
        .map(|g| values[g * n / groups..(g + 1) * n / groups].iter().sum())
        .collect()
}

/// When to stop collecting excursions.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Stop {
    Cycles(usize),
    /// Total events, warmup included; the excursion open at the end is dropped.
    Events(u64),
}

/// Collects excursions above `k` after discarding the first `skip`.
pub(crate) fn collect_excursions(
    model: &QueueModel,
    levels: &[usize],
    skip: usize,
    stop: Stop,
    rng: RngStream,
) -> Result<(Vec<Excursion>, u64)> {
    let k = model.k as u64;
    let mut sim = Simulator::new(model, rng);
    let mut dynamics = BaseDynamics { model };
    let mut out = Vec::new();
    let mut current: Option<Excursion> = None;
    let mut seen = 0usize;
    loop {
        match stop {
            Stop::Cycles(n) if out.len() >= n => break,
            Stop::Events(n) if sim.events >= n => break,
            _ => {}
        }
        let before = sim.state.ell;
        sim.step(
            &mut dynamics,
            |s, dt| {
                if let Some(c) = current.as_mut() {
                    c.length += dt;
                    for (j, &lv) in levels.iter().enumerate() {
                        if s.ell >= lv as u64 {
                            c.above[j] += dt;
                        }
                    }
                }
            },
            false,
        )?;
        let after = sim.state.ell;
        if before < k && after >= k {
            current = Some(Excursion {
                length: 0.0,
                above: vec![0.0; levels.len()],
            });
        } else if before >= k && after < k {
            if let Some(c) = current.take() {
                seen += 1;
                if seen > skip {
                    out.push(c);
                }
            }
        }
    }
    Ok((out, sim.events))
}

/// `P(L >= ℓ | L >= k)` for each level from `budget_cycles` excursions.
pub fn cycle_tail_estimates(
    model: &QueueModel,
    levels: &[usize],
    budget_cycles: usize,
    seed: u64,
) -> Result<Vec<CycleEstimate>> {
    model.ensure_stable()?;
    if budget_cycles < MIN_CYCLES {
        return Err(QaError::InsufficientCycles {
            found: budget_cycles,
            needed: MIN_CYCLES,
        });
    }
    if let Some(&bad) = levels.iter().find(|&&l| l < model.k) {
        return Err(QaError::InvalidModel(format!("level {bad} is below k = {}", model.k)));
    }
    let skip = (budget_cycles / 10).min(1000);
    let (exc, events) = collect_excursions(model, levels, skip, Stop::Cycles(budget_cycles), RngStream::new(seed))?;
    let groups = exc.len().min(MAX_GROUPS);
    let lengths: Vec<f64> = exc.iter().map(|e| e.length).collect();
    let den = group_sums(&lengths, groups);
    let mean_len = lengths.iter().sum::<f64>() / lengths.len() as f64;
    Ok(levels
        .iter()
        .enumerate()
        .map(|(j, &level)| {
            let above: Vec<f64> = exc.iter().map(|e| e.above[j]).collect();
            let num = group_sums(&above, groups);
            let (estimate, se) = ratio_from_groups(&num, &den);
            CycleEstimate {
                level,
                estimate,
                se,
                ci: (estimate - 1.96 * se, estimate + 1.96 * se),
                cycles: exc.len(),
                mean_cycle_length: mean_len,
                events,
            }
        })
        .collect())
}

/// `P(L >= ℓ | L >= k)` by the cycle formula.
pub fn cycle_tail_estimate(model: &QueueModel, level: usize, budget_cycles: usize, seed: u64) -> Result<CycleEstimate> {
    Ok(cycle_tail_estimates(model, &[level], budget_cycles, seed)?.remove(0))
}
