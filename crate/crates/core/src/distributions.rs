//! Parametric inter-arrival and service-time laws.
//!
//! Every family knows its moment generating function `F̂(θ) = E e^{θT}`, the
//! truncated version `F̂(v, θ) = E e^{θ(T∧v)}`, and its tail class
//! (convergence abscissa β*, plateau boundary θ*, and θ̄ = −log F(0)).
//! Closed forms are used where the algebra permits; otherwise the identity
//! `E g(T∧v) = g(0) + ∫₀^v g'(t) P(T > t) dt` is integrated numerically.

use serde::{Deserialize, Serialize};

use crate::error::{QaError, Result};
use crate::ext::ExtReal;
use crate::quadrature::{integrate, integrate_doubling, integrate_to_infinity};
use crate::rng::RngStream;

/// A parametric law on `[0, ∞)` with finite positive mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    /// Point mass at `value`.
    Deterministic { value: f64 },
    Exponential { rate: f64 },
    /// Sum of `shape` independent `Exponential(rate)` phases.
    Erlang { shape: u32, rate: f64 },
    /// Mixture of exponentials: rate `rates[j]` with probability `probs[j]`.
    HyperExponential { probs: Vec<f64>, rates: Vec<f64> },
    /// Uniform on `[a, b]`.
    UniformShift { a: f64, b: f64 },
    /// Survival function `(1 + x)^{-r} e^{-δx}`; heavy-tailed when `delta = 0`.
    ParetoExp { r: f64, delta: f64 },
    /// Mass `p0` at zero, otherwise distributed as `rest`.
    PointMassMix { p0: f64, rest: Box<DistributionSpec> },
}

/// Tail classification of a law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailInfo {
    /// β* = sup{θ : F̂(θ) < ∞}; zero means heavy-tailed.
    pub beta_star: ExtReal,
    /// θ* = −log F̂(β*), −∞ when F̂ diverges at its abscissa.
    pub theta_star: ExtReal,
    /// F̂(β*).
    pub mgf_at_beta: ExtReal,
    /// F̂'(β*) = E(T e^{β* T}); infinite in the corner case where the
    /// plateau value is attained with an unbounded slope.
    pub mgf_slope_at_beta: ExtReal,
    /// θ̄ = −log F(0), +∞ when there is no atom at zero.
    pub theta_bar: ExtReal,
}

impl TailInfo {
    pub fn is_heavy(&self) -> bool {
        self.beta_star == ExtReal::Finite(0.0)
    }
}

fn exprel(z: f64) -> f64 {
    if z.abs() < 1e-300 {
        1.0
    } else {
        z.exp_m1() / z
    }
}

/// `1 − e^{−z}(1 + z)` without cancellation for small `z`.
fn one_minus_exp_poly(z: f64) -> f64 {
    if z < 0.1 {
        let mut term = z;
        let mut sum = 0.0;
        for m in 2..30 {
            term *= -z / m as f64;
            // term = (-1)^{m-1} z^m / m!; summand is (-1)^m (m-1) z^m / m!
            sum -= term * (m - 1) as f64;
        }
        sum
    } else {
        1.0 - (-z).exp() * (1.0 + z)
    }
}

impl DistributionSpec {
    /// Checks parameter ranges and the finite positive mean requirement.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(QaError::InvalidDistribution(format!("{msg}: {self:?}")));
        let pos = |x: f64| x.is_finite() && x > 0.0;
        match self {
            DistributionSpec::Deterministic { value } => {
                if !pos(*value) {
                    return bad("deterministic value must be positive");
                }
            }
            DistributionSpec::Exponential { rate } => {
                if !pos(*rate) {
                    return bad("rate must be positive");
                }
            }
            DistributionSpec::Erlang { shape, rate } => {
                if *shape == 0 || !pos(*rate) {
                    return bad("erlang needs shape >= 1 and positive rate");
                }
            }
            DistributionSpec::HyperExponential { probs, rates } => {
                if probs.is_empty() || probs.len() != rates.len() {
                    return bad("hyperexponential needs matching non-empty probs and rates");
                }
                if probs.iter().any(|&p| !pos(p)) || rates.iter().any(|&r| !pos(r)) {
                    return bad("hyperexponential probs and rates must be positive");
                }
                if (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return bad("hyperexponential probs must sum to one");
                }
            }
            DistributionSpec::UniformShift { a, b } => {
                if !(a.is_finite() && b.is_finite() && *a >= 0.0 && b > a) {
                    return bad("uniform needs 0 <= a < b");
                }
            }
            DistributionSpec::ParetoExp { r, delta } => {
                if !pos(*r) || !(delta.is_finite() && *delta >= 0.0) {
                    return bad("pareto-exp needs r > 0 and delta >= 0");
                }
                if *delta == 0.0 && *r <= 1.0 {
                    return bad("pareto-exp with delta = 0 needs r > 1 for a finite mean");
                }
            }
            DistributionSpec::PointMassMix { p0, rest } => {
                if !(p0.is_finite() && *p0 >= 0.0 && *p0 < 1.0) {
                    return bad("point-mass weight must lie in [0, 1)");
                }
                rest.validate()?;
            }
        }
        Ok(())
    }

    /// P(T = 0).
    pub fn atom_at_zero(&self) -> f64 {
        match self {
            DistributionSpec::PointMassMix { p0, rest } => p0 + (1.0 - p0) * rest.atom_at_zero(),
            _ => 0.0,
        }
    }

    /// P(T > t) for `t >= 0`.
    pub fn survival(&self, t: f64) -> f64 {
        match self {
            DistributionSpec::Deterministic { value } => {
                if t < *value {
                    1.0
                } else {
                    0.0
                }
            }
            DistributionSpec::Exponential { rate } => (-rate * t).exp(),
            DistributionSpec::Erlang { shape, rate } => {
                let x = rate * t;
                let mut term = 1.0;
                let mut sum = 1.0;
                for j in 1..*shape {
                    term *= x / j as f64;
                    sum += term;
                }
                (-x).exp() * sum
            }
            DistributionSpec::HyperExponential { probs, rates } => probs
                .iter()
                .zip(rates)
                .map(|(p, r)| p * (-r * t).exp())
                .sum(),
            DistributionSpec::UniformShift { a, b } => {
                if t < *a {
                    1.0
                } else if t >= *b {
                    0.0
                } else {
                    (b - t) / (b - a)
                }
            }
            DistributionSpec::ParetoExp { r, delta } => {
                (1.0 + t).powf(-r) * (-delta * t).exp()
            }
            DistributionSpec::PointMassMix { p0, rest } => (1.0 - p0) * rest.survival(t),
        }
    }

    /// Density of the absolutely continuous part; zero for deterministic laws.
    pub fn density(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match self {
            DistributionSpec::Deterministic { .. } => 0.0,
            DistributionSpec::Exponential { rate } => rate * (-rate * t).exp(),
            DistributionSpec::Erlang { shape, rate } => {
                if *shape == 1 {
                    return rate * (-rate * t).exp();
                }
                if t == 0.0 {
                    return 0.0;
                }
                let n = *shape as f64;
                let log_fact: f64 = (1..*shape).map(|j| (j as f64).ln()).sum();
                (n * rate.ln() + (n - 1.0) * t.ln() - rate * t - log_fact).exp()
            }
            DistributionSpec::HyperExponential { probs, rates } => probs
                .iter()
                .zip(rates)
                .map(|(p, r)| p * r * (-r * t).exp())
                .sum(),
            DistributionSpec::UniformShift { a, b } => {
                if t >= *a && t <= *b {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
            DistributionSpec::ParetoExp { r, delta } => {
                (1.0 + t).powf(-r - 1.0) * (-delta * t).exp() * (r + delta * (1.0 + t))
            }
            DistributionSpec::PointMassMix { p0, rest } => (1.0 - p0) * rest.density(t),
        }
    }

    /// Points where the survival function has kinks or jumps.
    fn breakpoints(&self) -> Vec<f64> {
        match self {
            DistributionSpec::Deterministic { value } => vec![*value],
            DistributionSpec::UniformShift { a, b } => {
                if *a > 0.0 {
                    vec![*a, *b]
                } else {
                    vec![*b]
                }
            }
            DistributionSpec::PointMassMix { rest, .. } => rest.breakpoints(),
            _ => Vec::new(),
        }
    }

    /// `∫₀^upper g(t) P(T > t) dt`, with `upper = None` meaning `+∞`.
    pub(crate) fn survival_integral<G: Fn(f64) -> f64>(&self, g: G, upper: Option<f64>) -> f64 {
        let f = |t: f64| {
            let s = self.survival(t);
            if s == 0.0 {
                0.0
            } else {
                g(t) * s
            }
        };
        let mut lo = 0.0;
        let mut total = 0.0;
        for bp in self.breakpoints() {
            if let Some(u) = upper {
                if bp >= u {
                    break;
                }
            }
            total += integrate(&f, lo, bp);
            lo = bp;
        }
        match upper {
            Some(u) => total + integrate_doubling(&f, lo, u),
            None => {
                // Bounded support: nothing beyond the last breakpoint.
                if matches!(
                    self.core(),
                    DistributionSpec::Deterministic { .. } | DistributionSpec::UniformShift { .. }
                ) {
                    total
                } else {
                    total + integrate_to_infinity(&f, lo)
                }
            }
        }
    }

    /// Natural log of the density; finite wherever the density is positive.
    pub(crate) fn log_density(&self, t: f64) -> f64 {
        match self {
            DistributionSpec::Erlang { shape, rate } if *shape > 1 => {
                if t == 0.0 {
                    return f64::NEG_INFINITY;
                }
                let n = *shape as f64;
                let log_fact: f64 = (1..*shape).map(|j| (j as f64).ln()).sum();
                n * rate.ln() + (n - 1.0) * t.ln() - rate * t - log_fact
            }
            DistributionSpec::ParetoExp { r, delta } => {
                (-r - 1.0) * t.ln_1p() - delta * t + (r + delta * (1.0 + t)).ln()
            }
            _ => self.density(t).ln(),
        }
    }

    /// `E (T∧v)^j e^{x (T∧v)}` for a law with a density (no atoms), as
    /// `∫₀^v t^j e^{xt} f(t) dt + v^j e^{xv} P(T > v)`. The integrand is
    /// formed in log space so that `e^{xt}` and a decaying density can be
    /// combined far out in the tail; all terms are nonnegative, so small
    /// expectations keep their relative accuracy.
    fn density_expectation(&self, x: f64, j: i32, upper: Option<f64>) -> f64 {
        let f = |t: f64| {
            let ld = self.log_density(t);
            if ld == f64::NEG_INFINITY {
                return 0.0;
            }
            let lg = x * t + if j == 0 { 0.0 } else { j as f64 * t.ln() };
            (lg + ld).exp()
        };
        let mut lo = 0.0;
        let mut total = 0.0;
        for bp in self.breakpoints() {
            if let Some(u) = upper {
                if bp >= u {
                    break;
                }
            }
            total += integrate(&f, lo, bp);
            lo = bp;
        }
        match upper {
            Some(u) => {
                let s = self.survival(u);
                let tail = if s > 0.0 {
                    (x * u + j as f64 * u.ln() + s.ln()).exp()
                } else {
                    0.0
                };
                total + integrate_doubling(&f, lo, u) + tail
            }
            None => {
                if matches!(self, DistributionSpec::UniformShift { .. }) {
                    total
                } else {
                    total + integrate_to_infinity(&f, lo)
                }
            }
        }
    }

    /// The law underneath any point-mass wrappers.
    pub fn core(&self) -> &DistributionSpec {
        match self {
            DistributionSpec::PointMassMix { rest, .. } => rest.core(),
            other => other,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            DistributionSpec::Deterministic { value } => *value,
            DistributionSpec::Exponential { rate } => 1.0 / rate,
            DistributionSpec::Erlang { shape, rate } => *shape as f64 / rate,
            DistributionSpec::HyperExponential { probs, rates } => {
                probs.iter().zip(rates).map(|(p, r)| p / r).sum()
            }
            DistributionSpec::UniformShift { a, b } => 0.5 * (a + b),
            DistributionSpec::ParetoExp { r, delta } => {
                if *delta == 0.0 {
                    1.0 / (r - 1.0)
                } else {
                    self.survival_integral(|_| 1.0, None)
                }
            }
            DistributionSpec::PointMassMix { p0, rest } => (1.0 - p0) * rest.mean(),
        }
    }

    /// Rate `1 / E(T)`.
    pub fn rate(&self) -> f64 {
        1.0 / self.mean()
    }

    /// E(T²), possibly infinite.
    pub fn second_moment(&self) -> ExtReal {
        let v = match self {
            DistributionSpec::Deterministic { value } => value * value,
            DistributionSpec::Exponential { rate } => 2.0 / (rate * rate),
            DistributionSpec::Erlang { shape, rate } => {
                let n = *shape as f64;
                n * (n + 1.0) / (rate * rate)
            }
            DistributionSpec::HyperExponential { probs, rates } => {
                probs.iter().zip(rates).map(|(p, r)| 2.0 * p / (r * r)).sum()
            }
            DistributionSpec::UniformShift { a, b } => (a * a + a * b + b * b) / 3.0,
            DistributionSpec::ParetoExp { r, delta } => {
                if *delta == 0.0 {
                    if *r <= 2.0 {
                        return ExtReal::PosInf;
                    }
                    2.0 / ((r - 1.0) * (r - 2.0))
                } else {
                    self.survival_integral(|t| 2.0 * t, None)
                }
            }
            DistributionSpec::PointMassMix { p0, rest } => match rest.second_moment() {
                ExtReal::Finite(s) => (1.0 - p0) * s,
                other => return other,
            },
        };
        ExtReal::Finite(v)
    }

    /// Variance of `T`, possibly infinite.
    pub fn variance(&self) -> ExtReal {
        match self.second_moment() {
            ExtReal::Finite(s) => {
                let m = self.mean();
                ExtReal::Finite((s - m * m).max(0.0))
            }
            other => other,
        }
    }

    /// `F̂(θ) = E e^{θT}`.
    pub fn mgf(&self, theta: f64) -> ExtReal {
        if theta == 0.0 {
            return ExtReal::Finite(1.0);
        }
        let v = match self {
            DistributionSpec::Deterministic { value } => (theta * value).exp(),
            DistributionSpec::Exponential { rate } => {
                if theta >= *rate {
                    return ExtReal::PosInf;
                }
                rate / (rate - theta)
            }
            DistributionSpec::Erlang { shape, rate } => {
                if theta >= *rate {
                    return ExtReal::PosInf;
                }
                (rate / (rate - theta)).powi(*shape as i32)
            }
            DistributionSpec::HyperExponential { probs, rates } => {
                let mut s = 0.0;
                for (p, r) in probs.iter().zip(rates) {
                    if theta >= *r {
                        return ExtReal::PosInf;
                    }
                    s += p * r / (r - theta);
                }
                s
            }
            DistributionSpec::UniformShift { a, b } => (theta * a).exp() * exprel(theta * (b - a)),
            DistributionSpec::ParetoExp { r, delta } => {
                if theta > *delta {
                    return ExtReal::PosInf;
                }
                if theta == *delta {
                    if *r <= 1.0 {
                        return ExtReal::PosInf;
                    }
                    1.0 + delta / (r - 1.0)
                } else {
                    self.density_expectation(theta, 0, None)
                }
            }
            DistributionSpec::PointMassMix { p0, rest } => match rest.mgf(theta) {
                ExtReal::Finite(m) => p0 + (1.0 - p0) * m,
                other => return other,
            },
        };
        ExtReal::from_f64(v)
    }

    /// `F̂(v, θ) = E e^{θ(T∧v)}` for finite `v > 0`; always finite unless it
    /// overflows `f64`.
    pub fn truncated_mgf(&self, v: f64, theta: f64) -> f64 {
        if theta == 0.0 {
            return 1.0;
        }
        match self {
            DistributionSpec::Deterministic { value } => (theta * value.min(v)).exp(),
            DistributionSpec::Exponential { rate } => {
                let a = theta - rate;
                rate * v * exprel(a * v) + (a * v).exp()
            }
            DistributionSpec::HyperExponential { probs, rates } => probs
                .iter()
                .zip(rates)
                .map(|(p, r)| {
                    let a = theta - r;
                    p * (r * v * exprel(a * v) + (a * v).exp())
                })
                .sum(),
            DistributionSpec::UniformShift { a, b } => {
                if v <= *a {
                    (theta * v).exp()
                } else if v >= *b {
                    (theta * a).exp() * exprel(theta * (b - a))
                } else {
                    let w = b - a;
                    (theta * a).exp() * (v - a) * exprel(theta * (v - a)) / w
                        + (theta * v).exp() * (b - v) / w
                }
            }
            DistributionSpec::PointMassMix { p0, rest } => p0 + (1.0 - p0) * rest.truncated_mgf(v, theta),
            DistributionSpec::Erlang { .. } | DistributionSpec::ParetoExp { .. } => {
                self.density_expectation(theta, 0, Some(v))
            }
        }
    }

    /// `[E e^{x S}, E S e^{x S}, E S² e^{x S}]` with `S = T∧v` (`v = None`
    /// for no truncation). Entries may be `+∞` beyond the abscissa.
    pub fn mgf_derivatives(&self, v: Option<f64>, x: f64) -> [f64; 3] {
        if let DistributionSpec::Deterministic { value } = self {
            let c = v.map_or(*value, |v| value.min(v));
            let e = (x * c).exp();
            return [e, c * e, c * c * e];
        }
        if let DistributionSpec::PointMassMix { p0, rest } = self {
            let [m0, m1, m2] = rest.mgf_derivatives(v, x);
            let q = 1.0 - p0;
            return [p0 + q * m0, q * m1, q * m2];
        }
        if v.is_none() {
            let tail = self.tail_info();
            if let ExtReal::Finite(beta) = tail.beta_star {
                if x > beta {
                    return [f64::INFINITY; 3];
                }
                if x == beta && !tail.mgf_slope_at_beta.is_finite() {
                    return [self.mgf(x).to_f64(), f64::INFINITY, f64::INFINITY];
                }
            }
        }
        let m0 = match v {
            Some(v) => self.truncated_mgf(v, x),
            None => self.mgf(x).to_f64(),
        };
        let m1 = self.density_expectation(x, 1, v);
        let m2 = self.density_expectation(x, 2, v);
        [m0, m1, m2]
    }

    /// Tail classification.
    pub fn tail_info(&self) -> TailInfo {
        let atom = self.atom_at_zero();
        let theta_bar = if atom > 0.0 {
            ExtReal::Finite(-atom.ln())
        } else {
            ExtReal::PosInf
        };
        let (beta, at_beta, slope) = match self {
            DistributionSpec::Deterministic { .. } | DistributionSpec::UniformShift { .. } => {
                (ExtReal::PosInf, ExtReal::PosInf, ExtReal::PosInf)
            }
            DistributionSpec::Exponential { rate } | DistributionSpec::Erlang { rate, .. } => {
                (ExtReal::Finite(*rate), ExtReal::PosInf, ExtReal::PosInf)
            }
            DistributionSpec::HyperExponential { rates, .. } => {
                let b = rates.iter().cloned().fold(f64::INFINITY, f64::min);
                (ExtReal::Finite(b), ExtReal::PosInf, ExtReal::PosInf)
            }
            DistributionSpec::ParetoExp { r, delta } => {
                let at = self.mgf(*delta);
                // E(T e^{δT}) = ∫ (1 + δt) (1+t)^{-r} dt, finite iff r > 2.
                let slope = if *r <= 2.0 {
                    ExtReal::PosInf
                } else if *delta == 0.0 {
                    ExtReal::Finite(self.mean())
                } else {
                    ExtReal::Finite(
                        integrate_to_infinity(|t: f64| (1.0 + delta * t) * (1.0 + t).powf(-r), 0.0),
                    )
                };
                (ExtReal::Finite(*delta), at, slope)
            }
            DistributionSpec::PointMassMix { p0, rest } => {
                let inner = rest.tail_info();
                let at = match inner.mgf_at_beta {
                    ExtReal::Finite(m) => ExtReal::Finite(p0 + (1.0 - p0) * m),
                    other => other,
                };
                let slope = match inner.mgf_slope_at_beta {
                    ExtReal::Finite(m) => ExtReal::Finite((1.0 - p0) * m),
                    other => other,
                };
                (inner.beta_star, at, slope)
            }
        };
        TailInfo {
            beta_star: beta,
            theta_star: at_beta.ln().neg(),
            mgf_at_beta: at_beta,
            mgf_slope_at_beta: slope,
            theta_bar,
        }
    }

    /// `(E(T∧v), Var(T∧v))`; `v = None` gives the plain moments and fails
    /// when the second moment is infinite.
    pub fn truncated_moments(&self, v: Option<f64>) -> Result<(f64, f64)> {
        let Some(v) = v else {
            let m = self.mean();
            return match self.second_moment() {
                ExtReal::Finite(s) => Ok((m, (s - m * m).max(0.0))),
                _ => Err(QaError::InfiniteSecondMoment),
            };
        };
        let (m, s) = self.truncated_raw_moments(v);
        Ok((m, (s - m * m).max(0.0)))
    }

    fn truncated_raw_moments(&self, v: f64) -> (f64, f64) {
        match self {
            DistributionSpec::Deterministic { value } => {
                let c = value.min(v);
                (c, c * c)
            }
            DistributionSpec::Exponential { rate } => exp_trunc_moments(*rate, v),
            DistributionSpec::HyperExponential { probs, rates } => {
                probs.iter().zip(rates).fold((0.0, 0.0), |(m, s), (p, r)| {
                    let (mj, sj) = exp_trunc_moments(*r, v);
                    (m + p * mj, s + p * sj)
                })
            }
            DistributionSpec::UniformShift { a, b } => {
                if v <= *a {
                    (v, v * v)
                } else if v >= *b {
                    (0.5 * (a + b), (a * a + a * b + b * b) / 3.0)
                } else {
                    let w = b - a;
                    (
                        ((v * v - a * a) / 2.0 + v * (b - v)) / w,
                        ((v * v * v - a * a * a) / 3.0 + v * v * (b - v)) / w,
                    )
                }
            }
            DistributionSpec::PointMassMix { p0, rest } => {
                let (m, s) = rest.truncated_raw_moments(v);
                ((1.0 - p0) * m, (1.0 - p0) * s)
            }
            DistributionSpec::Erlang { .. } | DistributionSpec::ParetoExp { .. } => (
                self.survival_integral(|_| 1.0, Some(v)),
                self.survival_integral(|t| 2.0 * t, Some(v)),
            ),
        }
    }

    /// One i.i.d. draw.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match self {
            DistributionSpec::Deterministic { value } => *value,
            DistributionSpec::Exponential { rate } => rng.exp1() / rate,
            DistributionSpec::Erlang { shape, rate } => {
                (0..*shape).map(|_| rng.exp1()).sum::<f64>() / rate
            }
            DistributionSpec::HyperExponential { probs, rates } => {
                let j = pick_index(probs, rng.uniform());
                rng.exp1() / rates[j]
            }
            DistributionSpec::UniformShift { a, b } => a + (b - a) * rng.uniform(),
            DistributionSpec::ParetoExp { r, delta } => {
                // Competing risks: the survival function factorises into a
                // Lomax part and an exponential part.
                let lomax = rng.open01().powf(-1.0 / r) - 1.0;
                if *delta > 0.0 {
                    lomax.min(rng.exp1() / delta)
                } else {
                    lomax
                }
            }
            DistributionSpec::PointMassMix { p0, rest } => {
                if rng.uniform() < *p0 {
                    0.0
                } else {
                    rest.sample(rng)
                }
            }
        }
    }

    /// Draw from the law conditioned on `T > v`; requires `P(T > v) > 0`.
    pub fn sample_above(&self, v: f64, rng: &mut RngStream) -> f64 {
        match self {
            DistributionSpec::Deterministic { value } => *value,
            DistributionSpec::Exponential { rate } => v + rng.exp1() / rate,
            DistributionSpec::Erlang { shape, rate } => {
                // Given T > v, the number of completed phases by time v is
                // Poisson(rate v) conditioned below `shape`.
                let x = rate * v;
                let mut w = vec![1.0];
                for j in 1..*shape as usize {
                    let prev = w[j - 1];
                    w.push(prev * x / j as f64);
                }
                let total: f64 = w.iter().sum();
                let probs: Vec<f64> = w.iter().map(|p| p / total).collect();
                let done = pick_index(&probs, rng.uniform());
                let left = *shape as usize - done;
                v + (0..left).map(|_| rng.exp1()).sum::<f64>() / rate
            }
            DistributionSpec::HyperExponential { probs, rates } => {
                let w: Vec<f64> = probs.iter().zip(rates).map(|(p, r)| p * (-r * v).exp()).collect();
                let total: f64 = w.iter().sum();
                let post: Vec<f64> = w.iter().map(|p| p / total).collect();
                let j = pick_index(&post, rng.uniform());
                v + rng.exp1() / rates[j]
            }
            DistributionSpec::UniformShift { a, b } => {
                let lo = a.max(v);
                lo + (b - lo) * rng.uniform()
            }
            DistributionSpec::ParetoExp { r, delta } => {
                let lomax = (1.0 + v) * rng.open01().powf(-1.0 / r) - 1.0;
                if *delta > 0.0 {
                    lomax.min(v + rng.exp1() / delta)
                } else {
                    lomax
                }
            }
            DistributionSpec::PointMassMix { rest, .. } => rest.sample_above(v, rng),
        }
    }

    /// Law of `c T`.
    pub fn scaled(&self, c: f64) -> Result<DistributionSpec> {
        Ok(match self {
            DistributionSpec::Deterministic { value } => DistributionSpec::Deterministic { value: value * c },
            DistributionSpec::Exponential { rate } => DistributionSpec::Exponential { rate: rate / c },
            DistributionSpec::Erlang { shape, rate } => DistributionSpec::Erlang {
                shape: *shape,
                rate: rate / c,
            },
            DistributionSpec::HyperExponential { probs, rates } => DistributionSpec::HyperExponential {
                probs: probs.clone(),
                rates: rates.iter().map(|r| r / c).collect(),
            },
            DistributionSpec::UniformShift { a, b } => DistributionSpec::UniformShift { a: a * c, b: b * c },
            DistributionSpec::ParetoExp { .. } => {
                return Err(QaError::InvalidDistribution(
                    "pareto-exp laws are not closed under time scaling".into(),
                ))
            }
            DistributionSpec::PointMassMix { p0, rest } => DistributionSpec::PointMassMix {
                p0: *p0,
                rest: Box::new(rest.scaled(c)?),
            },
        })
    }

    /// Two-moment hyperexponential with balanced means; needs `variance >= mean²`.
    pub fn balanced_h2(mean: f64, variance: f64) -> Result<DistributionSpec> {
        let scv = variance / (mean * mean);
        if !(scv >= 1.0) || !(mean > 0.0) {
            return Err(QaError::InvalidDistribution(format!(
                "balanced H2 needs squared coefficient of variation >= 1, got {scv}"
            )));
        }
        let p = 0.5 * (1.0 + ((scv - 1.0) / (scv + 1.0)).sqrt());
        Ok(DistributionSpec::HyperExponential {
            probs: vec![p, 1.0 - p],
            rates: vec![2.0 * p / mean, 2.0 * (1.0 - p) / mean],
        })
    }
}

fn exp_trunc_moments(rate: f64, v: f64) -> (f64, f64) {
    let z = rate * v;
    (v * exprel(-z), 2.0 / (rate * rate) * one_minus_exp_poly(z))
}

pub(crate) fn pick_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (j, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return j;
        }
    }
    probs.len() - 1
}

/// Law of a positive integer batch size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum BatchLaw {
    /// Always `size` customers.
    Deterministic { size: u32 },
    /// `P(A = j) = (1 - p) p^{j-1}`, `j >= 1`.
    Geometric { p: f64 },
    /// `P(A = j + 1) = probs[j]`.
    FiniteSupport { probs: Vec<f64> },
}

impl BatchLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            BatchLaw::Deterministic { size } => *size >= 1,
            BatchLaw::Geometric { p } => p.is_finite() && *p >= 0.0 && *p < 1.0,
            BatchLaw::FiniteSupport { probs } => {
                !probs.is_empty()
                    && probs.iter().all(|p| p.is_finite() && *p >= 0.0)
                    && (probs.iter().sum::<f64>() - 1.0).abs() < 1e-9
            }
        };
        if ok {
            Ok(())
        } else {
            Err(QaError::InvalidDistribution(format!("invalid batch law {self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            BatchLaw::Deterministic { size } => *size as f64,
            BatchLaw::Geometric { p } => 1.0 / (1.0 - p),
            BatchLaw::FiniteSupport { probs } => {
                probs.iter().enumerate().map(|(j, p)| (j + 1) as f64 * p).sum()
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            BatchLaw::Deterministic { .. } => 0.0,
            BatchLaw::Geometric { p } => p / ((1.0 - p) * (1.0 - p)),
            BatchLaw::FiniteSupport { probs } => {
                let m = self.mean();
                probs
                    .iter()
                    .enumerate()
                    .map(|(j, p)| p * ((j + 1) as f64 - m).powi(2))
                    .sum()
            }
        }
    }

    /// `E e^{θ (A ∧ m)}`, `m = None` for no truncation.
    pub fn mgf(&self, m: Option<u64>, theta: f64) -> ExtReal {
        if theta == 0.0 {
            return ExtReal::Finite(1.0);
        }
        match self {
            BatchLaw::Deterministic { size } => {
                let a = m.map_or(*size as u64, |m| m.min(*size as u64));
                ExtReal::from_f64((theta * a as f64).exp())
            }
            BatchLaw::FiniteSupport { probs } => ExtReal::from_f64(
                probs
                    .iter()
                    .enumerate()
                    .map(|(j, p)| {
                        let a = m.map_or(j as u64 + 1, |m| m.min(j as u64 + 1));
                        p * (theta * a as f64).exp()
                    })
                    .sum(),
            ),
            BatchLaw::Geometric { p } => {
                let q = p * theta.exp();
                match m {
                    None => {
                        if q >= 1.0 {
                            ExtReal::PosInf
                        } else {
                            ExtReal::Finite((1.0 - p) * theta.exp() / (1.0 - q))
                        }
                    }
                    Some(m) => {
                        // Σ_{j<m} (1-p) p^{j-1} e^{θj} + p^{m-1} e^{θm}
                        let m = m.max(1);
                        let head = if (q - 1.0).abs() < 1e-12 {
                            (1.0 - p) * theta.exp() * (m - 1) as f64
                        } else {
                            (1.0 - p) * theta.exp() * (1.0 - q.powi(m as i32 - 1)) / (1.0 - q)
                        };
                        ExtReal::from_f64(head + q.powi(m as i32 - 1) * theta.exp())
                    }
                }
            }
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> u64 {
        match self {
            BatchLaw::Deterministic { size } => *size as u64,
            BatchLaw::Geometric { p } => {
                if *p == 0.0 {
                    1
                } else {
                    1 + (rng.open01().ln() / p.ln()).floor() as u64
                }
            }
            BatchLaw::FiniteSupport { probs } => pick_index(probs, rng.uniform()) as u64 + 1,
        }
    }

    /// The law reweighted by `e^{θA} / E e^{θA}`.
    pub fn tilted(&self, theta: f64) -> Result<BatchLaw> {
        Ok(match self {
            BatchLaw::Deterministic { .. } => self.clone(),
            BatchLaw::Geometric { p } => {
                let q = p * theta.exp();
                if q >= 1.0 {
                    return Err(QaError::no_root(crate::error::NoRootReason::BatchMgfDiverges));
                }
                BatchLaw::Geometric { p: q }
            }
            BatchLaw::FiniteSupport { probs } => {
                let w: Vec<f64> = probs
                    .iter()
                    .enumerate()
                    .map(|(j, p)| p * (theta * (j + 1) as f64).exp())
                    .collect();
                let s: f64 = w.iter().sum();
                BatchLaw::FiniteSupport {
                    probs: w.into_iter().map(|x| x / s).collect(),
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp1() -> DistributionSpec {
        DistributionSpec::Exponential { rate: 1.0 }
    }

    #[test]
    fn mgf_examples() {
        assert_eq!(exp1().mgf(0.5), ExtReal::Finite(2.0));
        let pe = DistributionSpec::ParetoExp { r: 1.5, delta: 0.0 };
        assert_eq!(pe.mgf(0.1), ExtReal::PosInf);
        for d in [exp1(), pe, DistributionSpec::Deterministic { value: 2.0 }] {
            assert_eq!(d.mgf(0.0), ExtReal::Finite(1.0));
        }
    }

    #[test]
    fn truncated_mgf_examples() {
        let d = DistributionSpec::Deterministic { value: 3.0 };
        assert!((d.truncated_mgf(1.0, 1.0) - std::f64::consts::E).abs() < 1e-15);
        let expected = 2.0 * (1.0 - (-0.5f64).exp()) + (-0.5f64).exp();
        assert!((exp1().truncated_mgf(1.0, 0.5) - expected).abs() < 1e-14);
        assert!((expected - 1.393469).abs() < 1e-6);
        assert_eq!(exp1().truncated_mgf(7.0, 0.0), 1.0);
    }

    #[test]
    fn tail_info_examples() {
        let t = exp1().tail_info();
        assert_eq!(t.beta_star, ExtReal::Finite(1.0));
        assert_eq!(t.mgf_at_beta, ExtReal::PosInf);
        assert_eq!(t.theta_star, ExtReal::NegInf);

        let pe = DistributionSpec::ParetoExp { r: 1.5, delta: 0.2 };
        let t = pe.tail_info();
        assert_eq!(t.beta_star, ExtReal::Finite(0.2));
        let at = 1.0 + 0.2 / 0.5;
        assert!((t.mgf_at_beta.finite().unwrap() - at).abs() < 1e-15);
        assert!((t.theta_star.finite().unwrap() + at.ln()).abs() < 1e-15);
        assert_eq!(t.mgf_slope_at_beta, ExtReal::PosInf);

        let mix = DistributionSpec::PointMassMix { p0: 0.3, rest: Box::new(exp1()) };
        assert!((mix.tail_info().theta_bar.finite().unwrap() + 0.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn pareto_mgf_at_abscissa_matches_quadrature() {
        // F̂(δ) = 1 + δ ∫ (1+t)^{-r} dt, compared against the limit from below.
        let pe = DistributionSpec::ParetoExp { r: 2.5, delta: 0.3 };
        let at = pe.mgf(0.3).finite().unwrap();
        let below = pe.mgf(0.3 - 1e-7).finite().unwrap();
        assert!((at - below).abs() < 1e-5, "{at} {below}");
    }

    #[test]
    fn truncated_moments_examples() {
        let d = DistributionSpec::Deterministic { value: 3.0 };
        assert_eq!(d.truncated_moments(Some(1.0)).unwrap(), (1.0, 0.0));
        assert_eq!(exp1().truncated_moments(None).unwrap(), (1.0, 1.0));
        let (m, _) = exp1().truncated_moments(Some(1.0)).unwrap();
        assert!((m - 0.632_120_558_828_557_7).abs() < 1e-15);
        let heavy = DistributionSpec::ParetoExp { r: 1.5, delta: 0.0 };
        assert_eq!(heavy.truncated_moments(None), Err(QaError::InfiniteSecondMoment));
    }

    #[test]
    fn closed_forms_agree_with_survival_quadrature() {
        let laws = [
            exp1(),
            DistributionSpec::HyperExponential { probs: vec![0.2, 0.8], rates: vec![0.3, 2.0] },
            DistributionSpec::UniformShift { a: 0.5, b: 2.0 },
            DistributionSpec::PointMassMix { p0: 0.25, rest: Box::new(exp1()) },
        ];
        for d in &laws {
            for v in [0.3, 1.0, 1.7, 5.0] {
                for th in [-2.0, -0.4, 0.3, 1.5] {
                    let closed = d.truncated_mgf(v, th);
                    let quad = 1.0 + th * d.survival_integral(|t| (th * t).exp(), Some(v));
                    assert!((closed - quad).abs() < 1e-11 * closed.max(1.0), "{d:?} {v} {th}");
                }
                let (m, var) = d.truncated_moments(Some(v)).unwrap();
                let m_q = d.survival_integral(|_| 1.0, Some(v));
                let s_q = d.survival_integral(|t| 2.0 * t, Some(v));
                assert!((m - m_q).abs() < 1e-12);
                assert!((var - (s_q - m_q * m_q)).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn erlang_conditional_sampler_has_right_mean() {
        // E(T | T > v) for Erlang(2, 1): (v² + 2v + 2) / (1 + v)
        let d = DistributionSpec::Erlang { shape: 2, rate: 1.0 };
        let mut rng = RngStream::new(5);
        let n = 200_000;
        let v = 1.5;
        let m: f64 = (0..n).map(|_| d.sample_above(v, &mut rng)).sum::<f64>() / n as f64;
        let exact = (v * v + 2.0 * v + 2.0) / (1.0 + v);
        assert!((m - exact).abs() < 0.01, "{m} {exact}");
    }

    #[test]
    fn batch_mgf_truncation() {
        let g = BatchLaw::Geometric { p: 0.4 };
        let full = g.mgf(None, 0.3).finite().unwrap();
        let big_m = g.mgf(Some(200), 0.3).finite().unwrap();
        assert!((full - big_m).abs() < 1e-12);
        let brute: f64 = (1..4).map(|j| 0.6 * 0.4f64.powi(j - 1) * (0.3 * j as f64).exp()).sum::<f64>()
            + 0.4f64.powi(3) * (0.3 * 4.0f64).exp();
        assert!((g.mgf(Some(4), 0.3).finite().unwrap() - brute).abs() < 1e-13);
        assert_eq!(g.mgf(None, 1.0), ExtReal::PosInf);
    }

    #[test]
    fn serde_shape_is_family_params() {
        let d = DistributionSpec::PointMassMix { p0: 0.3, rest: Box::new(exp1()) };
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(
            s,
            r#"{"family":"point_mass_mix","params":{"p0":0.3,"rest":{"family":"exponential","params":{"rate":1.0}}}}"#
        );
        let bad = r#"{"family":"exponential","params":{"rate":1.0,"mu":2.0}}"#;
        assert!(serde_json::from_str::<DistributionSpec>(bad).is_err());
    }
}
