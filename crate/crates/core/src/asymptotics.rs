//! The rate function γ, the tail decay rate α, and the heavy-traffic and
//! large-variance limit rates with their Taylor-error diagnostics.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::distributions::DistributionSpec;
use crate::error::{QaError, Result};
use crate::ext::{ExtReal, Truncation};
use crate::model::{ArrivalSpec, QueueModel};
use crate::rate_functions::{solve_xi, xi_limit, RateKind};

/// Guard band for the strict inequality α < θᵢ.
pub const REGIME_GUARD: f64 = 1e-9;
/// Largest θ explored when searching for the sign change of γ.
pub const ALPHA_SEARCH_BOUND: f64 = 1e3;
const ALPHA_TOL: f64 = 1e-13;

/// `η(△, θ)` for `θ >= 0`, including superposed and batch arrivals.
/// Returns `−∞` when a batch MGF diverges (γ is then `+∞`).
pub fn eta_limit(arrival: &ArrivalSpec, theta: f64) -> Result<ExtReal> {
    match arrival {
        ArrivalSpec::Single { law } => xi_limit(law, theta).map(ExtReal::Finite),
        ArrivalSpec::Superposed { laws } => laws
            .iter()
            .map(|l| xi_limit(l, theta))
            .sum::<Result<f64>>()
            .map(ExtReal::Finite),
        ArrivalSpec::Batch { law, batch } => match batch.mgf(None, theta) {
            ExtReal::Finite(b) => {
                let t = b.ln();
                if ExtReal::Finite(t) >= law.tail_info().theta_bar {
                    Ok(ExtReal::NegInf)
                } else {
                    xi_limit(law, t).map(ExtReal::Finite)
                }
            }
            _ => Ok(ExtReal::NegInf),
        },
    }
}

/// `ζᵢ(△, θ) = ξ(△, −θ)`.
pub fn zeta_limit(service: &DistributionSpec, theta: f64) -> Result<f64> {
    xi_limit(service, -theta)
}

/// `θᵢ = log F̂ᵢ(βᵢ)`: beyond it `ζᵢ(△, ·)` sits on its plateau.
pub fn server_theta(service: &DistributionSpec) -> ExtReal {
    service.tail_info().theta_star.neg()
}

/// `γ_A(θ) = −(η(△, θ) + Σ_{i∈A} ζᵢ(△, θ))` for `θ >= 0`.
pub fn gamma_subset(model: &QueueModel, subset: &[usize], theta: f64) -> Result<f64> {
    if theta < 0.0 {
        return Err(QaError::ThetaOutOfRange {
            theta,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let eta = match eta_limit(&model.arrival, theta)? {
        ExtReal::Finite(e) => e,
        _ => return Ok(f64::INFINITY),
    };
    let mut s = eta;
    for &i in subset {
        s += zeta_limit(&model.services[i], theta)?;
    }
    Ok(-s)
}

/// `γ(θ)` over all servers.
pub fn gamma_eval(model: &QueueModel, theta: f64) -> Result<f64> {
    let all: Vec<usize> = (0..model.k).collect();
    gamma_subset(model, &all, theta)
}

/// Tail regime of the stationary queue length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `α < θᵢ` for every server: `e^{αx} P(L > x)` converges to a constant.
    ExactAsymptotic,
    /// Only the logarithmic decay rate is asserted.
    LogOnly,
    /// `α = 0`.
    Zero,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::ExactAsymptotic => "ExactAsymptotic",
            Regime::LogOnly => "LogOnly",
            Regime::Zero => "Zero",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayResult {
    pub alpha: f64,
    pub regime: Regime,
    /// α_A per requested server subset (0-based indices, sorted).
    pub alpha_subset: BTreeMap<Vec<usize>, f64>,
    pub rho_subset: BTreeMap<Vec<usize>, f64>,
    /// θᵢ per server.
    pub server_thetas: Vec<ExtReal>,
}

/// `α_A = sup{θ >= 0 : γ_A(θ) <= 0}`.
pub fn alpha_subset(model: &QueueModel, subset: &[usize]) -> Result<f64> {
    let light_thetas: Vec<f64> = subset
        .iter()
        .filter_map(|&i| server_theta(&model.services[i]).finite())
        .filter(|&t| t > 0.0)
        .collect();
    let g = |t: f64| gamma_subset(model, subset, t);
    // γ is convex with γ(0) = 0, so γ'(0) >= 0 forces α = 0.
    let slope0 = model.arrival_rate() - subset.iter().map(|&i| model.services[i].rate()).sum::<f64>();
    if slope0 >= 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = light_thetas.iter().cloned().fold(f64::INFINITY, f64::min);
    if !hi.is_finite() {
        hi = 2.0;
    }
    loop {
        if g(hi)? > 0.0 {
            break;
        }
        lo = hi;
        if hi >= ALPHA_SEARCH_BOUND {
            return Err(QaError::NumericalRangeExceeded { bound: ALPHA_SEARCH_BOUND });
        }
        hi = (2.0 * hi).min(ALPHA_SEARCH_BOUND);
    }
    while hi - lo > ALPHA_TOL * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid)? <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if lo == 0.0 { 0.0 } else { 0.5 * (lo + hi) })
}

/// Solves for α over all servers and the default subsets `K` and `K \ K₀`.
pub fn solve_alpha(model: &QueueModel) -> Result<DecayResult> {
    solve_alpha_with(model, &[])
}

/// As [`solve_alpha`], additionally filling α_A and ρ_A for `extra` subsets.
pub fn solve_alpha_with(model: &QueueModel, extra: &[Vec<usize>]) -> Result<DecayResult> {
    model.ensure_stable()?;
    let all: Vec<usize> = (0..model.k).collect();
    let light = model.light_servers();
    let alpha = alpha_subset(model, &all)?;
    let mut alpha_map = BTreeMap::new();
    let mut rho_map = BTreeMap::new();
    let mut subsets = vec![all.clone(), light];
    subsets.extend(extra.iter().cloned());
    for mut s in subsets {
        s.sort_unstable();
        s.dedup();
        if alpha_map.contains_key(&s) {
            continue;
        }
        let a = if s == all { alpha } else { alpha_subset(model, &s)? };
        rho_map.insert(s.clone(), model.rho_subset(&s));
        alpha_map.insert(s, a);
    }
    let server_thetas: Vec<ExtReal> = model.services.iter().map(server_theta).collect();
    let regime = if alpha <= 0.0 {
        Regime::Zero
    } else if server_thetas.iter().all(|t| ExtReal::Finite(alpha + REGIME_GUARD) < *t) {
        Regime::ExactAsymptotic
    } else {
        Regime::LogOnly
    };
    Ok(DecayResult {
        alpha,
        regime,
        alpha_subset: alpha_map,
        rho_subset: rho_map,
        server_thetas,
    })
}

/// `2λ₀ / Σ_{i∈K̄} λᵢ³ σᵢ²` from limiting rates and variances (index 0 is
/// the arrival stream).
pub fn limit_rate_from(rates: &[f64], variances: &[f64]) -> Result<f64> {
    let denom: f64 = rates.iter().zip(variances).map(|(l, s2)| l.powi(3) * s2).sum();
    if !(denom > 0.0) {
        return Err(QaError::DegenerateVariances);
    }
    Ok(2.0 * rates[0] / denom)
}

/// Which limit a scaling sequence approaches.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalingMode {
    /// Service laws fixed, arrivals sped up so that `ρ⁽ⁿ⁾ = 1 − r_n`.
    HeavyTraffic,
    /// Components with `b2[i] > 0` (index 0 = arrivals) are replaced by
    /// balanced two-phase hyperexponentials with the base mean and variance
    /// `m² + b2[i] / s_n`; then arrivals are sped up as in heavy traffic.
    LargeVariance { b2: Vec<f64> },
}

/// One member of a scaling sequence.
#[derive(Debug, Clone)]
pub struct ScaledSystem {
    pub n: u32,
    pub model: QueueModel,
    pub r_n: f64,
    /// `1` in heavy-traffic mode.
    pub s_n: f64,
}

impl ScaledSystem {
    /// The factor `q_n` multiplying `L⁽ⁿ⁾` in the limit theorem.
    pub fn q_n(&self) -> f64 {
        self.r_n * self.s_n
    }
}

/// A generated sequence of queues approaching a heavy-traffic or
/// large-variance limit. `r_n = 2^{−r_exponent·n}` and, in large-variance
/// mode, `s_n = 2^{−n}`.
#[derive(Debug, Clone)]
pub struct ScalingSequence {
    pub mode: ScalingMode,
    pub base: QueueModel,
    pub r_exponent: f64,
}

impl ScalingSequence {
    pub fn heavy_traffic(base: QueueModel) -> Result<Self> {
        Self::new(ScalingMode::HeavyTraffic, base, 1.0)
    }

    pub fn large_variance(base: QueueModel, b2: Vec<f64>, r_exponent: f64) -> Result<Self> {
        Self::new(ScalingMode::LargeVariance { b2 }, base, r_exponent)
    }

    pub fn new(mode: ScalingMode, base: QueueModel, r_exponent: f64) -> Result<Self> {
        if !matches!(base.arrival, ArrivalSpec::Single { .. }) {
            return Err(QaError::InvalidModel("scaling sequences need a single arrival stream".into()));
        }
        if let ScalingMode::LargeVariance { b2 } = &mode {
            if b2.len() != base.k + 1 || b2.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
                return Err(QaError::InvalidModel(format!(
                    "large-variance mode needs k + 1 = {} nonnegative b² values",
                    base.k + 1
                )));
            }
        }
        if !(r_exponent > 0.0) {
            return Err(QaError::InvalidModel("r_exponent must be positive".into()));
        }
        Ok(ScalingSequence { mode, base, r_exponent })
    }

    fn arrival_law(&self) -> &DistributionSpec {
        match &self.base.arrival {
            ArrivalSpec::Single { law } => law,
            _ => unreachable!("checked in the constructor"),
        }
    }

    pub fn r_n(&self, n: u32) -> f64 {
        (-(self.r_exponent * n as f64) * std::f64::consts::LN_2).exp()
    }

    pub fn s_n(&self, n: u32) -> f64 {
        match self.mode {
            ScalingMode::HeavyTraffic => 1.0,
            ScalingMode::LargeVariance { .. } => 0.5f64.powi(n as i32),
        }
    }

    fn service_capacity(&self) -> f64 {
        self.base.service_rates().iter().sum()
    }

    /// The `n`-th system.
    pub fn system(&self, n: u32) -> Result<ScaledSystem> {
        let r_n = self.r_n(n);
        let s_n = self.s_n(n);
        let mut services = self.base.services.clone();
        let mut arrival = self.arrival_law().clone();
        if let ScalingMode::LargeVariance { b2 } = &self.mode {
            let inflate = |d: &DistributionSpec, b2: f64| -> Result<DistributionSpec> {
                if b2 == 0.0 {
                    return Ok(d.clone());
                }
                let m = d.mean();
                DistributionSpec::balanced_h2(m, m * m + b2 / s_n)
            };
            arrival = inflate(&arrival, b2[0])?;
            for (i, s) in services.iter_mut().enumerate() {
                *s = inflate(s, b2[i + 1])?;
            }
        }
        let target_rate = (1.0 - r_n) * self.service_capacity();
        let arrival = arrival.scaled(arrival.rate() / target_rate)?;
        let model = QueueModel::new(ArrivalSpec::Single { law: arrival }, services, self.base.selection)?;
        Ok(ScaledSystem { n, model, r_n, s_n })
    }

    /// Limiting rates `λᵢ`, index 0 the arrival stream.
    pub fn limit_rates(&self) -> Vec<f64> {
        let mut r = vec![self.service_capacity()];
        r.extend(self.base.service_rates());
        r
    }

    /// Limiting variances σᵢ² (heavy traffic) or `bᵢ²` (large variance).
    pub fn limit_variances(&self) -> Result<Vec<f64>> {
        match &self.mode {
            ScalingMode::HeavyTraffic => {
                let a = self.arrival_law();
                let c = a.rate() / self.service_capacity();
                let mut v = vec![var_of(a)? * c * c];
                for s in &self.base.services {
                    v.push(var_of(s)?);
                }
                Ok(v)
            }
            ScalingMode::LargeVariance { b2 } => Ok(b2.clone()),
        }
    }
}

fn var_of(d: &DistributionSpec) -> Result<f64> {
    d.variance().finite().ok_or(QaError::InfiniteSecondMoment)
}

/// Rate of the exponential limit of `(1 − ρ⁽ⁿ⁾) L⁽ⁿ⁾` under heavy traffic.
pub fn ht_limit_rate(seq: &ScalingSequence) -> Result<f64> {
    if seq.mode != ScalingMode::HeavyTraffic {
        return Err(QaError::InvalidModel("not a heavy-traffic sequence".into()));
    }
    limit_rate_from(&seq.limit_rates(), &seq.limit_variances()?)
}

/// Rate of the exponential limit of `(1 − ρ⁽ⁿ⁾) s_n L⁽ⁿ⁾` under large variances.
pub fn lv_limit_rate(seq: &ScalingSequence) -> Result<f64> {
    if !matches!(seq.mode, ScalingMode::LargeVariance { .. }) {
        return Err(QaError::InvalidModel("not a large-variance sequence".into()));
    }
    limit_rate_from(&seq.limit_rates(), &seq.limit_variances()?)
}

/// Second-order Taylor remainder of a rate function at θ:
/// `ξ(v,θ) + λ(v)θ + ½λ(v)³σ(v)²θ²` for arrival/generic curves and
/// `ζ(v,θ) − λ(v)θ + ½λ(v)³σ(v)²θ²` for service curves, where
/// `λ(v) = 1/E(T∧v)` and `σ(v)² = Var(T∧v)`.
pub fn taylor_error(dist: &DistributionSpec, trunc: Truncation, theta: f64, kind: RateKind) -> Result<f64> {
    if theta == 0.0 {
        return Ok(0.0);
    }
    let (m, var) = dist.truncated_moments(trunc.finite())?;
    let lam = 1.0 / m;
    let quad = 0.5 * lam.powi(3) * var * theta * theta;
    Ok(match kind {
        RateKind::Service => solve_xi(dist, trunc, -theta)? - lam * theta + quad,
        _ => solve_xi(dist, trunc, theta)? + lam * theta + quad,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct TaylorRow {
    pub n: u32,
    pub r_n: f64,
    pub s_n: f64,
    pub theta: f64,
    /// Largest normalised remainder over all components and both
    /// truncations (△ and `1/q_n`).
    pub normalized: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaylorTable {
    pub rows: Vec<TaylorRow>,
    /// Whether, for every θ, the normalised remainder decreases in `n`.
    pub monotone: bool,
}

impl TaylorTable {
    /// Per `n`, the supremum over the θ grid.
    pub fn sup_by_n(&self) -> Vec<(u32, f64)> {
        let mut out: Vec<(u32, f64)> = Vec::new();
        for r in &self.rows {
            match out.last_mut() {
                Some((n, v)) if *n == r.n => *v = v.max(r.normalized),
                _ => out.push((r.n, r.normalized)),
            }
        }
        out
    }
}

/// Normalised Taylor remainders along a scaling sequence: at argument `q_n θ`
/// divided by `r_n² θ²` (heavy traffic) or `s_n r_n² θ²` (large variance).
pub fn verify_taylor_vanishing(seq: &ScalingSequence, ns: &[u32], theta_grid: &[f64]) -> Result<TaylorTable> {
    let mut rows = Vec::new();
    for &n in ns {
        let sys = seq.system(n)?;
        let q = sys.q_n();
        let norm = sys.s_n * sys.r_n * sys.r_n;
        let mut laws: Vec<(&DistributionSpec, RateKind)> = Vec::new();
        let arrival = &sys.model.arrival.streams()[0].clone();
        laws.push((arrival, RateKind::Arrival));
        for s in &sys.model.services {
            laws.push((s, RateKind::Service));
        }
        for &theta in theta_grid {
            let mut sup: f64 = 0.0;
            if theta != 0.0 {
                for (d, kind) in &laws {
                    for tr in [Truncation::Limit, Truncation::At(1.0 / q)] {
                        let e = taylor_error(d, tr, q * theta, *kind)?;
                        sup = sup.max(e.abs() / (norm * theta * theta));
                    }
                }
            }
            rows.push(TaylorRow {
                n,
                r_n: sys.r_n,
                s_n: sys.s_n,
                theta,
                normalized: sup,
            });
        }
    }
    let mut monotone = true;
    for &theta in theta_grid.iter().filter(|t| **t != 0.0) {
        let seq_vals: Vec<f64> = rows.iter().filter(|r| r.theta == theta).map(|r| r.normalized).collect();
        if seq_vals.windows(2).any(|w| w[1] >= w[0]) {
            monotone = false;
        }
    }
    Ok(TaylorTable { rows, monotone })
}
