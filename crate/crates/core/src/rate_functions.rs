//! Rate functions η, ζᵢ and ξ.
//!
//! `ξ(v, θ)` is the root `x` of `e^θ E e^{x(T∧v)} = 1`. Arrival rates are
//! `η = ξ` for the inter-arrival law and service rates are
//! `ζᵢ(v, θ) = ξ(v, −θ)` for the service law of server `i`. Roots are found by
//! bracketing the increasing function `θ + log E e^{x(T∧v)}` and bisecting,
//! followed by one guarded Newton step.

use crate::distributions::{BatchLaw, DistributionSpec};
use crate::error::{NoRootReason, QaError, Result};
use crate::ext::{ExtReal, Truncation};

/// Width at which bisection stops.
pub const BISECTION_WIDTH: f64 = 1e-13;
/// Bound on `|e^θ F̂(v, x) − 1|` at a returned root.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-10;
const MAX_WIDENINGS: usize = 60;

/// A nonnegative random variable known through its moment generating
/// function, as needed by the root solver.
pub trait MgfLaw {
    /// `E e^{xS}`, `+∞` when divergent.
    fn mgf(&self, x: f64) -> f64;
    /// `[E e^{xS}, E S e^{xS}, E S² e^{xS}]`.
    fn mgf_derivatives(&self, x: f64) -> [f64; 3];
    /// `E S`.
    fn mean(&self) -> f64;
    /// `P(S = 0)`.
    fn atom_at_zero(&self) -> f64;
    /// Convergence abscissa and the MGF value there.
    fn abscissa(&self) -> (ExtReal, ExtReal);
}

/// `T ∧ v` for a distribution and an optional finite truncation level.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedLaw<'a> {
    pub dist: &'a DistributionSpec,
    pub v: Option<f64>,
}

impl MgfLaw for TruncatedLaw<'_> {
    fn mgf(&self, x: f64) -> f64 {
        match self.v {
            Some(v) => self.dist.truncated_mgf(v, x),
            None => self.dist.mgf(x).to_f64(),
        }
    }

    fn mgf_derivatives(&self, x: f64) -> [f64; 3] {
        self.dist.mgf_derivatives(self.v, x)
    }

    fn mean(&self) -> f64 {
        match self.v {
            Some(v) => self
                .dist
                .truncated_moments(Some(v))
                .map(|(m, _)| m)
                .unwrap_or_else(|_| self.dist.mean()),
            None => self.dist.mean(),
        }
    }

    fn atom_at_zero(&self) -> f64 {
        self.dist.atom_at_zero()
    }

    fn abscissa(&self) -> (ExtReal, ExtReal) {
        match self.v {
            Some(_) => (ExtReal::PosInf, ExtReal::PosInf),
            None => {
                let t = self.dist.tail_info();
                (t.beta_star, t.mgf_at_beta)
            }
        }
    }
}

/// Solves `θ + log E e^{xS} = 0` for `x`.
pub fn solve_root<L: MgfLaw + ?Sized>(law: &L, theta: f64) -> Result<f64> {
    if theta == 0.0 {
        return Ok(0.0);
    }
    let g = |x: f64| theta + law.mgf(x).ln();
    let c = 1.0 / law.mean();
    let (mut lo, mut hi);
    if theta > 0.0 {
        let p = law.atom_at_zero();
        if p > 0.0 && theta >= -p.ln() {
            return Err(QaError::no_root(NoRootReason::BeyondThetaBar));
        }
        hi = 0.0;
        lo = -(c * theta + 1.0);
        let mut n = 0;
        while g(lo) > 0.0 {
            if n == MAX_WIDENINGS {
                return Err(QaError::no_root(NoRootReason::BeyondThetaBar));
            }
            hi = lo;
            lo *= 2.0;
            n += 1;
        }
    } else {
        let (beta, at_beta) = law.abscissa();
        let beta = beta.to_f64();
        if let ExtReal::Finite(m) = at_beta {
            let gb = theta + m.ln();
            if gb < 0.0 {
                return Err(QaError::no_root(NoRootReason::BeyondThetaStar));
            }
            if gb == 0.0 {
                return Ok(beta);
            }
        }
        lo = 0.0;
        hi = (c * -theta + 1.0).min(beta);
        let mut n = 0;
        while g(hi) < 0.0 {
            if n == MAX_WIDENINGS || hi >= beta {
                return Err(QaError::no_root(NoRootReason::BeyondThetaStar));
            }
            lo = hi;
            hi = (2.0 * hi).min(beta);
            n += 1;
        }
    }
    for _ in 0..400 {
        if hi - lo <= BISECTION_WIDTH {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let x = 0.5 * (lo + hi);
    let gx = g(x);
    let [m0, m1, _] = law.mgf_derivatives(x);
    let slope = m1 / m0;
    if slope.is_finite() && slope > 0.0 {
        let xn = x - gx / slope;
        if xn >= lo && xn <= hi {
            let gn = g(xn);
            if gn.abs() < gx.abs() {
                return Ok(xn);
            }
        }
    }
    Ok(x)
}

/// `ξ(v, θ)`: finite `v`, no truncation, or the `v ↑ ∞` limit.
pub fn solve_xi(dist: &DistributionSpec, trunc: Truncation, theta: f64) -> Result<f64> {
    match trunc {
        Truncation::Limit => xi_limit(dist, theta),
        Truncation::At(v) => solve_xi_at(dist, Some(v), theta),
        Truncation::Infinite => solve_xi_at(dist, None, theta),
    }
}

fn solve_xi_at(dist: &DistributionSpec, v: Option<f64>, theta: f64) -> Result<f64> {
    match (dist, v) {
        (DistributionSpec::Deterministic { value }, _) => {
            let c = v.map_or(*value, |v| value.min(v));
            Ok(-theta / c)
        }
        (DistributionSpec::Exponential { rate }, None) => Ok(-rate * theta.exp_m1()),
        _ => solve_root(&TruncatedLaw { dist, v }, theta),
    }
}

/// `ξ(△, θ)`: the untruncated root above θ*, the abscissa β* at or below it.
pub fn xi_limit(dist: &DistributionSpec, theta: f64) -> Result<f64> {
    let tail = dist.tail_info();
    if ExtReal::Finite(theta) >= tail.theta_bar {
        return Err(QaError::no_root(NoRootReason::BeyondThetaBar));
    }
    if let (ExtReal::Finite(ts), ExtReal::Finite(beta)) = (tail.theta_star, tail.beta_star) {
        if theta <= ts {
            return Ok(beta);
        }
    }
    solve_xi_at(dist, None, theta)
}

/// Arrival rate function `η(u, θ)`.
pub fn eta(arrival: &DistributionSpec, trunc: Truncation, theta: f64) -> Result<f64> {
    solve_xi(arrival, trunc, theta)
}

/// Service rate function `ζ(v, θ) = ξ(v, −θ)`.
pub fn zeta(service: &DistributionSpec, trunc: Truncation, theta: f64) -> Result<f64> {
    solve_xi(service, trunc, -theta)
}

/// `η` of a superposition of independent renewal streams: the sum of the
/// per-stream rates.
pub fn eta_superposed(arrivals: &[DistributionSpec], trunc: Truncation, theta: f64) -> Result<f64> {
    arrivals.iter().map(|a| eta(a, trunc, theta)).sum()
}

/// `η(m, v, θ)` for batch arrivals: the root of
/// `E e^{θ(A∧m)} E e^{η (T₀∧v)} = 1`, with `m = None` for no batch truncation.
pub fn eta_batch(
    batch: &BatchLaw,
    arrival: &DistributionSpec,
    m: Option<u64>,
    trunc: Truncation,
    theta: f64,
) -> Result<f64> {
    if theta == 0.0 {
        return Ok(0.0);
    }
    match batch.mgf(m, theta) {
        ExtReal::Finite(b) => solve_xi(arrival, trunc, b.ln()),
        _ => Err(QaError::no_root(NoRootReason::BatchMgfDiverges)),
    }
}

/// First and second derivative of `θ ↦ ξ(v, θ)`.
///
/// By the implicit function theorem, with `κ = log F̂(v, ·)` evaluated at the
/// root, `ξ' = −1/κ'` and `ξ'' = −κ''/κ'³`.
pub fn xi_derivatives(dist: &DistributionSpec, trunc: Truncation, theta: f64) -> Result<(f64, f64)> {
    let v = match trunc {
        Truncation::At(v) => Some(v),
        Truncation::Infinite => None,
        Truncation::Limit => {
            let tail = dist.tail_info();
            if let ExtReal::Finite(ts) = tail.theta_star {
                if (theta - ts).abs() <= 1e-12 {
                    return Err(QaError::DerivativeUnavailable);
                }
                if theta < ts {
                    return Ok((0.0, 0.0));
                }
            }
            None
        }
    };
    let x = solve_xi_at(dist, v, theta)?;
    let [m0, m1, m2] = dist.mgf_derivatives(v, x);
    if !(m0.is_finite() && m1.is_finite() && m2.is_finite()) {
        return Err(QaError::DerivativeUnavailable);
    }
    let k1 = m1 / m0;
    let k2 = m2 / m0 - k1 * k1;
    Ok((-1.0 / k1, -k2 / (k1 * k1 * k1)))
}

/// Which rate function a curve represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    /// η, solved with the arrival law.
    Arrival,
    /// ζ, i.e. ξ at −θ for a service law.
    Service,
    /// ξ itself.
    Generic,
}

impl RateKind {
    pub fn name(self) -> &'static str {
        match self {
            RateKind::Arrival => "eta",
            RateKind::Service => "zeta",
            RateKind::Generic => "xi",
        }
    }
}

/// A rate function of one law at a fixed truncation level.
#[derive(Debug, Clone)]
pub struct RateCurve {
    pub dist: DistributionSpec,
    pub trunc: Truncation,
    pub kind: RateKind,
    /// Open interval of θ on which the curve has a finite value (the lower
    /// end is attained for untruncated laws whose MGF is finite at β*).
    pub domain: (ExtReal, ExtReal),
    pub tol: f64,
}

impl RateCurve {
    pub fn new(dist: DistributionSpec, trunc: Truncation, kind: RateKind) -> Self {
        let tail = dist.tail_info();
        let (lo, hi) = match trunc {
            Truncation::Infinite => (tail.theta_star, tail.theta_bar),
            _ => (ExtReal::NegInf, tail.theta_bar),
        };
        let domain = match kind {
            RateKind::Service => (hi.neg(), lo.neg()),
            _ => (lo, hi),
        };
        RateCurve {
            dist,
            trunc,
            kind,
            domain,
            tol: ROOT_RESIDUAL_TOL,
        }
    }

    fn xi_argument(&self, theta: f64) -> f64 {
        match self.kind {
            RateKind::Service => -theta,
            _ => theta,
        }
    }

    pub fn eval(&self, theta: f64) -> Result<f64> {
        solve_xi(&self.dist, self.trunc, self.xi_argument(theta))
    }

    /// `|e^{θ'} F̂(v, x) − 1|` at the ξ-argument `θ'`; `None` on the plateau
    /// of the limit curve, where the value is β* rather than a root.
    pub fn residual(&self, theta: f64, value: f64) -> Option<f64> {
        let t = self.xi_argument(theta);
        let v = match self.trunc {
            Truncation::At(v) => Some(v),
            Truncation::Infinite => None,
            Truncation::Limit => {
                let tail = self.dist.tail_info();
                if let ExtReal::Finite(ts) = tail.theta_star {
                    if t <= ts {
                        return None;
                    }
                }
                None
            }
        };
        let m = TruncatedLaw { dist: &self.dist, v }.mgf(value);
        Some((t.exp() * m - 1.0).abs())
    }

    /// Derivatives in the curve's own θ (sign-adjusted for service curves).
    pub fn derivatives(&self, theta: f64) -> Result<(f64, f64)> {
        let (d1, d2) = xi_derivatives(&self.dist, self.trunc, self.xi_argument(theta))?;
        Ok(match self.kind {
            RateKind::Service => (-d1, d2),
            _ => (d1, d2),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(rate: f64) -> DistributionSpec {
        DistributionSpec::Exponential { rate }
    }

    #[test]
    fn solve_xi_examples() {
        let d = DistributionSpec::Deterministic { value: 5.0 };
        assert_eq!(solve_xi(&d, Truncation::At(2.0), 0.7).unwrap(), -0.35);
        assert_eq!(solve_xi(&exp(1.0), Truncation::At(3.0), 0.0).unwrap(), 0.0);
        let x = solve_xi(&exp(1.0), Truncation::Infinite, 2f64.ln()).unwrap();
        assert!((x + 1.0).abs() < 1e-15);
    }

    #[test]
    fn generic_solver_matches_exponential_closed_form() {
        // Route the exponential law through the bracketing solver.
        let law = TruncatedLaw { dist: &exp(1.0), v: None };
        for th in [-3.0, -0.7, 0.2, 2f64.ln(), 4.0] {
            let x = solve_root(&law, th).unwrap();
            assert!((x - (1.0 - th.exp())).abs() < 1e-11, "{th} {x}");
        }
    }

    #[test]
    fn eta_and_zeta_examples() {
        let e = eta(&exp(0.7), Truncation::Infinite, 0.2).unwrap();
        assert!((e - 0.7 * (1.0 - 0.2f64.exp())).abs() < 1e-15);
        assert!((e + 0.154982).abs() < 1e-6);
        let z = zeta(&exp(0.5), Truncation::Infinite, 0.3).unwrap();
        assert!((z - 0.129591).abs() < 1e-6);
        let d = DistributionSpec::Deterministic { value: 4.0 };
        assert_eq!(zeta(&d, Truncation::At(2.0), 0.6).unwrap(), 0.3);
    }

    #[test]
    fn heavy_arrival_below_theta_star_has_no_root() {
        let pe = DistributionSpec::ParetoExp { r: 1.5, delta: 0.2 };
        // e^{0.5} ≈ 1.6487 exceeds F̂(β*) = 1.4.
        assert_eq!(
            eta(&pe, Truncation::Infinite, -0.5),
            Err(QaError::no_root(NoRootReason::BeyondThetaStar))
        );
        // Brute scan: θ + log F̂(x) stays negative on a fine grid below β*.
        for j in 0..=2000 {
            let x = 0.2 * j as f64 / 2000.0;
            assert!(-0.5 + pe.mgf(x).to_f64().ln() < 0.0);
        }
    }

    #[test]
    fn limit_plateau_and_corner() {
        let heavy = DistributionSpec::ParetoExp { r: 1.5, delta: 0.0 };
        for th in [0.0, 0.1, 1.0, 5.0] {
            assert_eq!(zeta(&heavy, Truncation::Limit, th).unwrap(), 0.0);
        }
        let pe = DistributionSpec::ParetoExp { r: 1.5, delta: 0.2 };
        let ts = pe.tail_info().theta_star.finite().unwrap();
        assert_eq!(xi_limit(&pe, ts).unwrap(), 0.2);
        assert_eq!(xi_limit(&pe, ts - 1.0).unwrap(), 0.2);
        assert_eq!(xi_derivatives(&pe, Truncation::Limit, ts), Err(QaError::DerivativeUnavailable));
        let x = xi_limit(&exp(1.0), 2f64.ln()).unwrap();
        assert!((x + 1.0).abs() < 1e-15);
    }

    #[test]
    fn superposed_and_batch_examples() {
        let th = 0.37;
        let s = eta_superposed(&[exp(0.3), exp(0.9)], Truncation::Infinite, th).unwrap();
        assert!((s - 1.2 * (1.0 - th.exp())).abs() < 1e-14);
        let det = DistributionSpec::Deterministic { value: 1.0 };
        let s = eta_superposed(&[det.clone(), det], Truncation::Infinite, 0.1).unwrap();
        assert!((s + 0.2).abs() < 1e-15);

        let two = BatchLaw::Deterministic { size: 2 };
        let b = eta_batch(&two, &exp(0.8), None, Truncation::Infinite, th).unwrap();
        assert!((b - 0.8 * (1.0 - (2.0 * th).exp())).abs() < 1e-14);
        let one = BatchLaw::Deterministic { size: 1 };
        let h2 = DistributionSpec::HyperExponential { probs: vec![0.3, 0.7], rates: vec![0.5, 2.0] };
        for tr in [Truncation::At(2.0), Truncation::Infinite] {
            assert_eq!(
                eta_batch(&one, &h2, None, tr, 0.4).unwrap(),
                eta(&h2, tr, 0.4).unwrap()
            );
        }
        assert_eq!(eta_batch(&BatchLaw::Geometric { p: 0.5 }, &exp(1.0), None, Truncation::Infinite, 0.0).unwrap(), 0.0);
        assert_eq!(
            eta_batch(&BatchLaw::Geometric { p: 0.5 }, &exp(1.0), None, Truncation::Infinite, 1.0),
            Err(QaError::no_root(NoRootReason::BatchMgfDiverges))
        );
    }

    #[test]
    fn derivative_examples() {
        let (d1, d2) = xi_derivatives(&exp(1.0), Truncation::Infinite, 0.0).unwrap();
        assert!((d1 + 1.0).abs() < 1e-12 && (d2 + 1.0).abs() < 1e-10, "{d1} {d2}");
        let det = DistributionSpec::Deterministic { value: 1.0 };
        assert_eq!(xi_derivatives(&det, Truncation::Infinite, 0.0).unwrap(), (-1.0, 0.0));
        let (d1, _) = xi_derivatives(&exp(1.0), Truncation::At(1.0), 0.0).unwrap();
        assert!((d1 + 1.0 / (1.0 - (-1f64).exp())).abs() < 1e-10);
        assert!((d1 + 1.581977).abs() < 1e-6);
    }

    #[test]
    fn point_mass_limits_arrival_domain() {
        let mix = DistributionSpec::PointMassMix { p0: 0.3, rest: Box::new(exp(1.0)) };
        let bar = -(0.3f64.ln());
        assert!(solve_xi(&mix, Truncation::At(2.0), bar - 1e-3).is_ok());
        assert_eq!(
            solve_xi(&mix, Truncation::At(2.0), bar),
            Err(QaError::no_root(NoRootReason::BeyondThetaBar))
        );
        let curve = RateCurve::new(mix, Truncation::At(2.0), RateKind::Arrival);
        assert_eq!(curve.domain.1, ExtReal::Finite(bar));
    }
}
