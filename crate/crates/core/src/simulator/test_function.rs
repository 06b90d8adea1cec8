//! The exponential test function
//! `f(ℓ, y) = exp(θ(ℓ∨k) + Σⱼ ηⱼ(v,θ)(y₀ⱼ∧v) + Σ_{i busy} ζᵢ(v,θ)(yᵢ∧v))`
//! and its exact integral along a drift segment.

use crate::error::{QaError, Result};
use crate::ext::Truncation;
use crate::model::{ArrivalSpec, QueueModel};
use crate::rate_functions::{eta, zeta};

use super::pdmp::PdmpState;

/// `f_{v,K(v),θ}` with every server truncated at `v`. Superposed arrivals
/// contribute one term per stream.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub v: f64,
    pub theta: f64,
    pub k: u64,
    /// `ηⱼ(v, θ)` per arrival stream.
    pub eta: Vec<f64>,
    /// `ζᵢ(v, θ)` per server.
    pub zeta: Vec<f64>,
}

/// Integrals of `f · indicator` over a stretch of time, scaled by `e^{−θk}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhiIntegrals {
    /// `∫ f`.
    pub phi: f64,
    /// `∫ f 1(R₀ⱼ < v)` per arrival stream.
    pub arrival: Vec<f64>,
    /// `∫ f 1(Rᵢ < v)` per server (idle servers have `Rᵢ = 0`).
    pub server: Vec<f64>,
    /// `∫ f 1(i idle)` per server.
    pub idle: Vec<f64>,
}

impl PhiIntegrals {
    pub fn new(streams: usize, k: usize) -> Self {
        PhiIntegrals {
            phi: 0.0,
            arrival: vec![0.0; streams],
            server: vec![0.0; k],
            idle: vec![0.0; k],
        }
    }

    pub fn add(&mut self, other: &PhiIntegrals) {
        self.phi += other.phi;
        for (a, b) in self.arrival.iter_mut().zip(&other.arrival) {
            *a += b;
        }
        for (a, b) in self.server.iter_mut().zip(&other.server) {
            *a += b;
        }
        for (a, b) in self.idle.iter_mut().zip(&other.idle) {
            *a += b;
        }
    }
}

impl TestFunction {
    /// Solves the rate functions for `(v, θ)`; batch arrivals are not
    /// supported because their jump sizes need a separately truncated test
    /// function.
    pub fn new(model: &QueueModel, v: f64, theta: f64) -> Result<Self> {
        let tr = Truncation::At(v);
        let eta = match &model.arrival {
            ArrivalSpec::Single { law } => vec![eta(law, tr, theta)?],
            ArrivalSpec::Superposed { laws } => laws.iter().map(|l| eta(l, tr, theta)).collect::<Result<_>>()?,
            ArrivalSpec::Batch { .. } => {
                return Err(QaError::InvalidModel(
                    "test-function validation is implemented for single and superposed arrivals".into(),
                ))
            }
        };
        let zeta = model.services.iter().map(|s| zeta(s, tr, theta)).collect::<Result<_>>()?;
        Ok(TestFunction {
            v,
            theta,
            k: model.k as u64,
            eta,
            zeta,
        })
    }

    /// `log f(x) − θk`.
    pub fn log_scaled(&self, s: &PdmpState) -> f64 {
        let mut e = self.theta * (s.ell.max(self.k) - self.k) as f64;
        for (c, y) in self.eta.iter().zip(&s.arrival_residuals) {
            e += c * y.min(self.v);
        }
        for (i, (c, y)) in self.zeta.iter().zip(&s.service_residuals).enumerate() {
            if s.busy[i] {
                e += c * y.min(self.v);
            }
        }
        e
    }

    /// Adds `∫₀^dt f(X(s)) · indicators ds` (scaled by `e^{−θk}`) for the
    /// linear drift starting at `s`. The exponent is piecewise linear with
    /// kinks where a residual crosses `v`, so each piece integrates in
    /// closed form.
    pub fn integrate_drift(&self, s: &PdmpState, dt: f64, out: &mut PhiIntegrals) {
        if dt <= 0.0 {
            return;
        }
        let streams = self.eta.len();
        // Each active component: (coefficient, time at which its residual drops below v).
        let mut cuts: [(f64, f64, usize); 32] = [(0.0, 0.0, 0); 32];
        let mut n = 0;
        let mut e0 = self.theta * (s.ell.max(self.k) - self.k) as f64;
        let mut slope = 0.0;
        let mut push = |c: f64, y: f64, id: usize, e0: &mut f64, slope: &mut f64, n: &mut usize| {
            if y <= self.v {
                *e0 += c * y;
                *slope -= c;
            } else {
                *e0 += c * self.v;
                let t = y - self.v;
                if t < dt {
                    if *n < cuts.len() {
                        cuts[*n] = (c, t, id);
                        *n += 1;
                    }
                }
            }
        };
        for j in 0..streams {
            push(self.eta[j], s.arrival_residuals[j], j, &mut e0, &mut slope, &mut n);
        }
        for i in 0..s.busy.len() {
            if s.busy[i] {
                push(self.zeta[i], s.service_residuals[i], streams + i, &mut e0, &mut slope, &mut n);
            }
        }
        let cuts = &mut cuts[..n];
        cuts.sort_by(|a, b| a.1.total_cmp(&b.1));

        // Indicator state at the start: below v already?
        let below = |id: usize, t: f64| -> bool {
            if id < streams {
                s.arrival_residuals[id] - t < self.v
            } else {
                let i = id - streams;
                !s.busy[i] || s.service_residuals[i] - t < self.v
            }
        };
        let mut t0 = 0.0;
        let mut e = e0;
        let mut next = 0;
        while t0 < dt {
            let t1 = if next < cuts.len() { cuts[next].1 } else { dt };
            let len = t1 - t0;
            if len > 0.0 {
                let x = slope * len;
                let integral = e.exp() * len * if x.abs() < 1e-300 { 1.0 } else { x.exp_m1() / x };
                out.phi += integral;
                for j in 0..streams {
                    if below(j, t0 + 0.5 * len) {
                        out.arrival[j] += integral;
                    }
                }
                for i in 0..s.busy.len() {
                    if below(streams + i, t0 + 0.5 * len) {
                        out.server[i] += integral;
                    }
                    if !s.busy[i] {
                        out.idle[i] += integral;
                    }
                }
                e += slope * len;
            }
            if next < cuts.len() {
                slope -= cuts[next].0;
                next += 1;
            }
            t0 = t1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::DistributionSpec;

    #[test]
    fn drift_integral_matches_quadrature_and_telescopes() {
        let m = QueueModel::single(
            DistributionSpec::Exponential { rate: 0.7 },
            vec![DistributionSpec::Exponential { rate: 0.5 }, DistributionSpec::Exponential { rate: 0.4 }],
        )
        .unwrap();
        let tf = TestFunction::new(&m, 1.5, -0.4).unwrap();
        let s = PdmpState {
            ell: 4,
            busy: vec![true, true],
            arrival_residuals: vec![2.7],
            service_residuals: vec![1.9, 0.8],
            clock: 0.0,
        };
        let dt = 0.75;
        let mut out = PhiIntegrals::new(1, 2);
        tf.integrate_drift(&s, dt, &mut out);
        let at = |t: f64| {
            let mut st = s.clone();
            st.arrival_residuals[0] -= t;
            st.service_residuals[0] -= t;
            st.service_residuals[1] -= t;
            tf.log_scaled(&st).exp()
        };
        let quad = crate::quadrature::integrate(&at, 0.0, dt);
        assert!((out.phi - quad).abs() < 1e-10, "{} {quad}", out.phi);
        // d/dt f = −(η 1(y₀<v) + Σ_busy ζᵢ 1(yᵢ<v)) f, so the weighted
        // integrals telescope to f(start) − f(end).
        let weighted = tf.eta[0] * out.arrival[0]
            + tf.zeta.iter().enumerate().map(|(i, z)| z * (out.server[i] - out.idle[i])).sum::<f64>();
        assert!((weighted - (at(0.0) - at(dt))).abs() < 1e-12);
    }
}
