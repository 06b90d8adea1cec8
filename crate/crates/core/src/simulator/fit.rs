//! Log-linear fits of simulated tail probabilities.

use serde::Serialize;

use crate::error::{QaError, Result};
use crate::stats::{jackknife, least_squares, ratio_se};

use super::stationary::StationaryEstimate;

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    /// Least-squares slope of `log P(L > x)` against `x`.
    pub slope: f64,
    /// Jackknife standard error of the slope over simulation batches.
    pub slope_se: f64,
    pub intercept: f64,
    pub levels: Vec<usize>,
    /// `P(L > x)` with standard error per level.
    pub tails: Vec<(f64, f64)>,
    /// `e^{αx} P(L > x)` with standard error per level, when α is given.
    pub prefactor: Option<Vec<(f64, f64)>>,
}

/// Fits `log P(L > x) ≈ a + b x` over `levels` (at least four).
pub fn empirical_decay_fit(levels: &[usize], est: &StationaryEstimate, alpha: Option<f64>) -> Result<DecayFit> {
    if levels.len() < 4 {
        return Err(QaError::InvalidModel("a decay fit needs at least four levels".into()));
    }
    let tails: Vec<(f64, f64)> = levels.iter().map(|&x| est.tail(x)).collect();
    if let Some(j) = tails.iter().position(|t| t.0 <= 0.0) {
        return Err(QaError::InsufficientTailMass { level: levels[j] });
    }
    let xs: Vec<f64> = levels.iter().map(|&x| x as f64).collect();
    let ys: Vec<f64> = tails.iter().map(|t| t.0.ln()).collect();
    let (slope, intercept) = least_squares(&xs, &ys);

    // Leave-one-batch-out slopes; each batch carries its time and the time
    // spent above every level.
    let rows: Vec<(f64, Vec<f64>)> = est
        .batches
        .iter()
        .map(|b| {
            let above = levels.iter().map(|&x| b.level_time.iter().skip(x + 1).sum()).collect();
            (b.time, above)
        })
        .collect();
    let (_, slope_se) = jackknife(&rows, |it| {
        let mut time = 0.0;
        let mut above = vec![0.0; levels.len()];
        for (t, a) in it {
            time += t;
            for (s, v) in above.iter_mut().zip(a) {
                *s += v;
            }
        }
        let y: Vec<f64> = above.iter().map(|a| (a / time).max(f64::MIN_POSITIVE).ln()).collect();
        least_squares(&xs, &y).0
    });

    let prefactor = alpha.map(|a| {
        levels
            .iter()
            .map(|&x| {
                let w = (a * x as f64).exp();
                let times: Vec<f64> = est.batches.iter().map(|b| b.time).collect();
                let above: Vec<f64> = est
                    .batches
                    .iter()
                    .map(|b| b.level_time.iter().skip(x + 1).sum())
                    .collect();
                let (p, se) = ratio_se(&above, &times);
                (w * p, w * se)
            })
            .collect()
    });
    Ok(DecayFit {
        slope,
        slope_se,
        intercept,
        levels: levels.to_vec(),
        tails,
        prefactor,
    })
}
