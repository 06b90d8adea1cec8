//! Exponential change of measure and importance sampling of rare tails.
//!
//! Tilting at `θ >= 0` replaces each inter-arrival law by the one with MGF
//! `s ↦ e^θ F̂₀(η(θ) + s)` and each service law by `s ↦ e^{−θ} F̂ᵢ(ζᵢ(θ) + s)`.
//! Servers with `θᵢ <= α` (the set `K_α`) are tilted through `T ∧ v` instead,
//! which keeps the tilted laws proper when `ζᵢ` sits on its plateau.
//! A draw `x` from a tilted law with exponent `c` and scale `e^{s}` carries the
//! likelihood-ratio factor `e^{−s − c (x∧v)}`.

use serde::Serialize;

use crate::asymptotics::{server_theta, solve_alpha, zeta_limit};
use crate::distributions::{pick_index, DistributionSpec};
use crate::error::{QaError, Result};
use crate::ext::{ExtReal, Truncation};
use crate::model::{ArrivalSpec, QueueModel};
use crate::quadrature::{integrate, integrate_doubling, integrate_to_infinity};
use crate::rate_functions::{solve_root, solve_xi, xi_limit, MgfLaw};
use crate::rng::RngStream;
use crate::simulator::cycle::{collect_excursions, group_sums, ratio_from_groups, Stop, MIN_CYCLES};
use crate::simulator::{BaseDynamics, Dynamics, Simulator};

const INVERSION_CELLS: usize = 256;
const INVERSION_TOL: f64 = 1e-10;
const MAX_GROUPS: usize = 100;

/// Tabulated inverse CDF of the density `f(x) e^{c(x − shift)}` on `[lo, hi]`.
#[derive(Debug, Clone)]
struct Inversion {
    base: DistributionSpec,
    c: f64,
    shift: f64,
    edges: Vec<f64>,
    cum: Vec<f64>,
}

impl Inversion {
    fn new(base: &DistributionSpec, c: f64, lo: f64, hi: f64) -> Self {
        let shift = if c > 0.0 { hi } else { lo };
        // Cells equally spaced in log(1 + x) so that mass near zero and a long
        // range up to `hi` are both resolved.
        let (a, b) = ((1.0 + lo).ln(), (1.0 + hi).ln());
        let edges: Vec<f64> = (0..=INVERSION_CELLS)
            .map(|j| (a + (b - a) * j as f64 / INVERSION_CELLS as f64).exp() - 1.0)
            .collect();
        let mut inv = Inversion {
            base: base.clone(),
            c,
            shift,
            edges,
            cum: Vec::with_capacity(INVERSION_CELLS + 1),
        };
        let mut acc = 0.0;
        inv.cum.push(0.0);
        for j in 0..INVERSION_CELLS {
            acc += integrate(|x| inv.g(x), inv.edges[j], inv.edges[j + 1]);
            inv.cum.push(acc);
        }
        inv
    }

    fn g(&self, x: f64) -> f64 {
        self.base.density(x) * (self.c * (x - self.shift)).exp()
    }

    fn sample(&self, rng: &mut RngStream) -> f64 {
        let total = *self.cum.last().unwrap();
        let target = rng.uniform() * total;
        let j = (self.cum.partition_point(|&m| m <= target) - 1).min(INVERSION_CELLS - 1);
        let rem = target - self.cum[j];
        let (mut lo, mut hi) = (self.edges[j], self.edges[j + 1]);
        let mut x = 0.5 * (lo + hi);
        for _ in 0..100 {
            let f = integrate(|t| self.g(t), self.edges[j], x) - rem;
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let d = self.g(x);
            let mut next = if d > 0.0 { x - f / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            let step = (next - x).abs();
            x = next;
            if step <= INVERSION_TOL * (1.0 + x) || hi - lo <= INVERSION_TOL * (1.0 + x) {
                break;
            }
        }
        x
    }
}

/// How draws from a tilted law are produced.
#[derive(Debug, Clone)]
enum Sampler {
    /// The base law itself (zero exponent or a point mass).
    Base,
    /// A law of the same family with shifted parameters.
    Closed(DistributionSpec),
    /// Uniform on `[a, b]` reweighted by `e^{cx}`, by inversion.
    Uniform { a: f64, b: f64, c: f64 },
    /// Base draws accepted with probability `e^{cx}` (`c < 0`).
    Reject { c: f64 },
    /// `ParetoExp(r, δ)` tilted by `0 < c < δ`, from a `ParetoExp(r, δ − c)`
    /// proposal; the density ratio is bounded by `δ / (δ − c)`.
    ParetoReject { r: f64, delta: f64, c: f64 },
    /// Atom at zero with the tilted weight, otherwise the tilted rest.
    Mix { p_atom: f64, rest: Box<Sampler> },
    /// Truncated tilt: above `v` the law is the base law conditioned on
    /// `T > v`; below `v` it is the reweighted head.
    Truncated { v: f64, p_tail: f64, head: Box<Head> },
}

#[derive(Debug, Clone)]
enum Head {
    /// Exponential mixture restricted to `[0, v)`: component weights and
    /// tilted rates.
    Exponentials { probs: Vec<f64>, rates: Vec<f64> },
    Uniform { a: f64, b: f64, c: f64 },
    Point(f64),
    Inversion(Inversion),
}

fn sample_uniform_tilt(a: f64, b: f64, c: f64, u: f64) -> f64 {
    if c == 0.0 {
        return a + (b - a) * u;
    }
    // Solve (e^{c(x−a)} − 1) / (e^{c(b−a)} − 1) = u in a cancellation-free form.
    let w = b - a;
    (a + (u * (c * w).exp_m1()).ln_1p() / c).clamp(a, b)
}

fn sample_truncated_exp(rate: f64, v: f64, u: f64) -> f64 {
    // Density ∝ e^{−rate x} on [0, v); rate may be negative.
    if rate == 0.0 {
        return u * v;
    }
    let z = -(-rate * v).exp_m1();
    (-(-u * z).ln_1p() / rate).clamp(0.0, v)
}

impl Head {
    fn new(base: &DistributionSpec, c: f64, v: f64) -> Head {
        match base {
            DistributionSpec::Deterministic { value } => Head::Point(*value),
            DistributionSpec::Exponential { rate } => Head::Exponentials {
                probs: vec![1.0],
                rates: vec![rate - c],
            },
            DistributionSpec::HyperExponential { probs, rates } => {
                // Head mass of component j: p_j r_j ∫₀^v e^{(c − r_j) x} dx.
                let w: Vec<f64> = probs
                    .iter()
                    .zip(rates)
                    .map(|(p, r)| {
                        let a = c - r;
                        p * r * if a == 0.0 { v } else { (a * v).exp_m1() / a }
                    })
                    .collect();
                let total: f64 = w.iter().sum();
                Head::Exponentials {
                    probs: w.iter().map(|x| x / total).collect(),
                    rates: rates.iter().map(|r| r - c).collect(),
                }
            }
            DistributionSpec::UniformShift { a, b } => Head::Uniform {
                a: *a,
                b: b.min(v),
                c,
            },
            _ => Head::Inversion(Inversion::new(base, c, 0.0, v)),
        }
    }

    fn sample(&self, v: f64, rng: &mut RngStream) -> f64 {
        match self {
            Head::Exponentials { probs, rates } => {
                let j = if probs.len() == 1 { 0 } else { pick_index(probs, rng.uniform()) };
                sample_truncated_exp(rates[j], v, rng.uniform())
            }
            Head::Uniform { a, b, c } => sample_uniform_tilt(*a, *b, *c, rng.uniform()),
            Head::Point(x) => *x,
            Head::Inversion(inv) => inv.sample(rng),
        }
    }
}

fn build_sampler(base: &DistributionSpec, c: f64, v: Option<f64>) -> Option<Sampler> {
    if c == 0.0 {
        return Some(Sampler::Base);
    }
    if let DistributionSpec::PointMassMix { p0, rest } = base {
        let m = match v {
            Some(v) => rest.truncated_mgf(v, c),
            None => rest.mgf(c).finite()?,
        };
        let p_atom = p0 / (p0 + (1.0 - p0) * m);
        return Some(Sampler::Mix {
            p_atom,
            rest: Box::new(build_sampler(rest, c, v)?),
        });
    }
    if let DistributionSpec::Deterministic { .. } = base {
        return Some(Sampler::Base);
    }
    if let Some(v) = v {
        let s = base.survival(v);
        let p_tail = if s > 0.0 {
            (c * v + s.ln() - base.truncated_mgf(v, c).ln()).exp()
        } else {
            0.0
        };
        return Some(Sampler::Truncated {
            v,
            p_tail,
            head: Box::new(Head::new(base, c, v)),
        });
    }
    let beta = base.tail_info().beta_star;
    if ExtReal::Finite(c) >= beta {
        return None;
    }
    Some(match base {
        DistributionSpec::Exponential { rate } => Sampler::Closed(DistributionSpec::Exponential { rate: rate - c }),
        DistributionSpec::Erlang { shape, rate } => Sampler::Closed(DistributionSpec::Erlang {
            shape: *shape,
            rate: rate - c,
        }),
        DistributionSpec::HyperExponential { probs, rates } => {
            let w: Vec<f64> = probs.iter().zip(rates).map(|(p, r)| p * r / (r - c)).collect();
            let total: f64 = w.iter().sum();
            Sampler::Closed(DistributionSpec::HyperExponential {
                probs: w.iter().map(|x| x / total).collect(),
                rates: rates.iter().map(|r| r - c).collect(),
            })
        }
        DistributionSpec::UniformShift { a, b } => Sampler::Uniform { a: *a, b: *b, c },
        DistributionSpec::ParetoExp { r, delta } => {
            if c < 0.0 {
                Sampler::Reject { c }
            } else {
                Sampler::ParetoReject { r: *r, delta: *delta, c }
            }
        }
        DistributionSpec::Deterministic { .. } | DistributionSpec::PointMassMix { .. } => unreachable!(),
    })
}

impl Sampler {
    fn sample(&self, base: &DistributionSpec, rng: &mut RngStream) -> f64 {
        match self {
            Sampler::Base => base.sample(rng),
            Sampler::Closed(d) => d.sample(rng),
            Sampler::Uniform { a, b, c } => sample_uniform_tilt(*a, *b, *c, rng.uniform()),
            Sampler::Reject { c } => loop {
                let x = base.sample(rng);
                if rng.uniform() < (c * x).exp() {
                    return x;
                }
            },
            Sampler::ParetoReject { r, delta, c } => {
                let proposal = DistributionSpec::ParetoExp { r: *r, delta: delta - c };
                let d = delta - c;
                loop {
                    let x = proposal.sample(rng);
                    let y = 1.0 + x;
                    let accept = (r + delta * y) / (r + d * y) * d / delta;
                    if rng.uniform() < accept {
                        return x;
                    }
                }
            }
            Sampler::Mix { p_atom, rest } => {
                if rng.uniform() < *p_atom {
                    0.0
                } else {
                    let inner = match base {
                        DistributionSpec::PointMassMix { rest, .. } => rest.as_ref(),
                        _ => base,
                    };
                    rest.sample(inner, rng)
                }
            }
            Sampler::Truncated { v, p_tail, head } => {
                if rng.uniform() < *p_tail {
                    base.sample_above(*v, rng)
                } else {
                    head.sample(*v, rng)
                }
            }
        }
    }
}

/// A law tilted by `e^{c (T∧v)}` and scaled by `e^{log_scale}`.
#[derive(Debug, Clone)]
pub struct TiltedLaw {
    pub base: DistributionSpec,
    /// Exponent `c`: `η(θ)` for arrivals, `ζᵢ(θ)` or `ζᵢ(v, θ)` for servers.
    pub shift: f64,
    /// Truncation level of the tilt; `None` tilts `T` itself.
    pub v: Option<f64>,
    /// `θ` for arrivals, `−θ` for servers.
    pub log_scale: f64,
    sampler: Option<Sampler>,
}

impl TiltedLaw {
    pub fn new(base: DistributionSpec, shift: f64, v: Option<f64>, log_scale: f64) -> Self {
        let sampler = build_sampler(&base, shift, v);
        TiltedLaw {
            base,
            shift,
            v,
            log_scale,
            sampler,
        }
    }

    /// The tilted law as a member of the base family, when it is one.
    pub fn closed_form(&self) -> Option<DistributionSpec> {
        match (&self.sampler, self.v) {
            (Some(Sampler::Base), _) => Some(self.base.clone()),
            (Some(Sampler::Closed(d)), None) => Some(d.clone()),
            _ => None,
        }
    }

    /// Whether draws can be generated (the tilt is proper and supported).
    pub fn can_sample(&self) -> bool {
        self.sampler.is_some()
    }

    /// One draw; panics if [`TiltedLaw::can_sample`] is false.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        self.sampler
            .as_ref()
            .expect("tilted law has no sampler")
            .sample(&self.base, rng)
    }

    /// `log(dP/dP̃)` for one draw `x`.
    pub fn log_likelihood_ratio(&self, x: f64) -> f64 {
        let y = self.v.map_or(x, |v| x.min(v));
        -self.log_scale - self.shift * y
    }

    /// Total mass `e^{log_scale} E e^{c (T∧v)}` by direct quadrature of the
    /// base density (plus atoms), independent of closed forms.
    pub fn total_mass(&self) -> f64 {
        let c = self.shift;
        let lw = |x: f64| c * self.v.map_or(x, |v| x.min(v));
        let m = mass_of(&self.base, &lw, self.v);
        self.log_scale.exp() * m
    }

    /// Mean of the tilted law of `T` (not `T ∧ v`); `+∞` when divergent.
    pub fn tilted_mean(&self) -> f64 {
        let scale = self.log_scale.exp();
        match self.v {
            None => scale * self.base.mgf_derivatives(None, self.shift)[1],
            Some(v) => {
                let head = self.base.mgf_derivatives(Some(v), self.shift)[1];
                let excess = self.base.mean() - self.base.survival_integral(|_| 1.0, Some(v));
                scale * (head + (self.shift * v).exp() * excess.max(0.0))
            }
        }
    }
}

/// `E e^{lw(T)}` by quadrature against the density and atoms of `d`.
fn mass_of(d: &DistributionSpec, lw: &dyn Fn(f64) -> f64, v: Option<f64>) -> f64 {
    let f = |x: f64| {
        let ld = d.log_density(x);
        if ld == f64::NEG_INFINITY {
            0.0
        } else {
            (lw(x) + ld).exp()
        }
    };
    match d {
        DistributionSpec::Deterministic { value } => lw(*value).exp(),
        DistributionSpec::PointMassMix { p0, rest } => p0 * lw(0.0).exp() + (1.0 - p0) * mass_of(rest, lw, v),
        DistributionSpec::UniformShift { a, b } => integrate(f, *a, *b),
        _ => match v {
            Some(v) => integrate_doubling(f, 0.0, v) + (lw(v) + d.survival(v).ln()).exp(),
            None => integrate_to_infinity(f, 0.0),
        },
    }
}

/// The tilted law as a random variable `S = T` (or `T ∧ v`) for root finding.
impl MgfLaw for TiltedLaw {
    fn mgf(&self, x: f64) -> f64 {
        if let (Some(Sampler::Closed(d)), None) = (&self.sampler, self.v) {
            return d.mgf(x).to_f64();
        }
        let m = match self.v {
            Some(v) => self.base.truncated_mgf(v, self.shift + x),
            None => self.base.mgf(self.shift + x).to_f64(),
        };
        self.log_scale.exp() * m
    }

    fn mgf_derivatives(&self, x: f64) -> [f64; 3] {
        if let (Some(Sampler::Closed(d)), None) = (&self.sampler, self.v) {
            return d.mgf_derivatives(None, x);
        }
        let s = self.log_scale.exp();
        self.base.mgf_derivatives(self.v, self.shift + x).map(|m| s * m)
    }

    fn mean(&self) -> f64 {
        self.mgf_derivatives(0.0)[1]
    }

    fn atom_at_zero(&self) -> f64 {
        self.log_scale.exp() * self.base.atom_at_zero()
    }

    fn abscissa(&self) -> (ExtReal, ExtReal) {
        if self.v.is_some() {
            return (ExtReal::PosInf, ExtReal::PosInf);
        }
        let t = self.base.tail_info();
        let beta = match t.beta_star {
            ExtReal::Finite(b) => ExtReal::Finite(b - self.shift),
            other => other,
        };
        let at = match t.mgf_at_beta {
            ExtReal::Finite(m) => ExtReal::Finite(self.log_scale.exp() * m),
            other => other,
        };
        (beta, at)
    }
}

/// The model under the change of measure at tilt `θ`.
#[derive(Debug, Clone)]
pub struct TiltedModel {
    pub base: QueueModel,
    pub theta: f64,
    /// Decay rate of the base model.
    pub alpha: f64,
    /// Servers with `θᵢ <= α`, tilted through `T ∧ v`.
    pub k_alpha: Vec<usize>,
    /// Truncation level for `K_α`; `None` is the `v ↑ ∞` limit.
    pub v: Option<f64>,
    /// `η(θ)` per arrival stream.
    pub eta: Vec<f64>,
    /// `ζᵢ(θ)`, or `ζᵢ(v, θ)` for servers in `K_α`.
    pub zeta: Vec<f64>,
    pub arrivals: Vec<TiltedLaw>,
    pub services: Vec<TiltedLaw>,
}

fn arrival_laws(model: &QueueModel) -> Result<Vec<DistributionSpec>> {
    match &model.arrival {
        ArrivalSpec::Batch { .. } => Err(QaError::InvalidModel(
            "tilting supports single or superposed arrival streams, not batches".into(),
        )),
        a => Ok(a.streams().into_iter().cloned().collect()),
    }
}

/// `K_α` and the upper end `α + δ₀` of the admissible tilt range.
fn k_alpha(model: &QueueModel, alpha: f64) -> (Vec<usize>, f64) {
    let mut k = Vec::new();
    let mut hi = f64::INFINITY;
    for (i, s) in model.services.iter().enumerate() {
        match server_theta(s) {
            ExtReal::Finite(t) if t <= alpha => k.push(i),
            ExtReal::Finite(t) => hi = hi.min(t),
            _ => {}
        }
    }
    (k, hi)
}

/// Tilts the model at `θ`, truncating `K_α` servers at `v` (`None` for the
/// `v ↑ ∞` limit, whose tilted laws may be defective).
pub fn build_tilted(model: &QueueModel, theta: f64, v: Option<f64>) -> Result<TiltedModel> {
    model.validate()?;
    let laws = arrival_laws(model)?;
    let alpha = solve_alpha(model)?.alpha;
    let (k_alpha, hi) = k_alpha(model, alpha);
    if !(theta >= 0.0 && theta < hi) {
        return Err(QaError::ThetaOutOfRange { theta, lo: 0.0, hi });
    }
    if let Some(v) = v {
        if !(v > 0.0 && v.is_finite()) {
            return Err(QaError::InvalidModel(format!("truncation level must be positive, got {v}")));
        }
    }
    let mut eta = Vec::new();
    let mut arrivals = Vec::new();
    for law in &laws {
        let e = solve_xi(law, Truncation::Infinite, theta)?;
        eta.push(e);
        arrivals.push(TiltedLaw::new(law.clone(), e, None, theta));
    }
    let mut zeta = Vec::new();
    let mut services = Vec::new();
    for (i, s) in model.services.iter().enumerate() {
        let (z, vi) = if k_alpha.contains(&i) {
            match v {
                Some(v) => (solve_xi(s, Truncation::At(v), -theta)?, Some(v)),
                None => (xi_limit(s, -theta)?, None),
            }
        } else {
            (solve_xi(s, Truncation::Infinite, -theta)?, None)
        };
        zeta.push(z);
        services.push(TiltedLaw::new(s.clone(), z, vi, -theta));
    }
    Ok(TiltedModel {
        base: model.clone(),
        theta,
        alpha,
        k_alpha,
        v,
        eta,
        zeta,
        arrivals,
        services,
    })
}

/// Default truncation for `K_α` servers: `50 / ζᵢ` at a first guess of the
/// level, refined once. `None` when `K_α` is empty.
pub fn default_truncation(model: &QueueModel, theta: f64) -> Result<Option<f64>> {
    let alpha = solve_alpha(model)?.alpha;
    let (k, _) = k_alpha(model, alpha);
    if k.is_empty() || theta == 0.0 {
        return Ok(None);
    }
    let mut level: f64 = 0.0;
    for i in k {
        let s = &model.services[i];
        let guess = zeta_limit(s, theta)?.max(theta / s.mean());
        let v0 = 50.0 / guess;
        let z1 = solve_xi(s, Truncation::At(v0), -theta)?;
        level = level.max(50.0 / z1);
    }
    Ok(Some(level))
}

/// `γ_{K_α(v)}(θ)`: γ with `K_α` servers entering through `ζᵢ(v, θ)`.
pub fn gamma_truncated(tilted: &TiltedModel, theta: f64) -> Result<f64> {
    let model = &tilted.base;
    let mut s = 0.0;
    for law in arrival_laws(model)? {
        s += solve_xi(&law, Truncation::Infinite, theta)?;
    }
    for (i, svc) in model.services.iter().enumerate() {
        let trunc = if tilted.k_alpha.contains(&i) {
            tilted.v.map_or(Truncation::Limit, Truncation::At)
        } else {
            Truncation::Infinite
        };
        s += solve_xi(svc, trunc, -theta)?;
    }
    Ok(-s)
}

/// γ of the tilted model at `θ̃`, computed from the tilted laws alone.
pub fn tilted_gamma(tilted: &TiltedModel, theta_tilde: f64) -> Result<f64> {
    let mut s = 0.0;
    for law in &tilted.arrivals {
        s += solve_root(law, theta_tilde)?;
    }
    for law in &tilted.services {
        s += solve_root(law, -theta_tilde)?;
    }
    Ok(-s)
}

/// `|γ̃(θ̃) − (γ(θ + θ̃) − γ(θ))|` where `γ̃` is the rate function of the
/// model tilted at `θ`.
pub fn verify_gamma_shift(model: &QueueModel, theta: f64, theta_tilde: f64, v: Option<f64>) -> Result<f64> {
    let tilted = build_tilted(model, theta, v)?;
    let lhs = tilted_gamma(&tilted, theta_tilde)?;
    let rhs = gamma_truncated(&tilted, theta + theta_tilde)? - gamma_truncated(&tilted, theta)?;
    Ok((lhs - rhs).abs())
}

/// Mean drift of `L` off the boundary under the tilted laws:
/// `Σ 1/E T̃₀ⱼ − Σᵢ 1/E T̃ᵢ`.
pub fn tilted_mean_drift(tilted: &TiltedModel) -> Result<f64> {
    let mut drift = 0.0;
    for law in &tilted.arrivals {
        drift += 1.0 / law.tilted_mean();
    }
    for (i, law) in tilted.services.iter().enumerate() {
        let m = law.tilted_mean();
        if !m.is_finite() {
            return Err(QaError::InfiniteMean { server: i });
        }
        drift -= 1.0 / m;
    }
    Ok(drift)
}

/// Draws from the tilted laws while accumulating the log likelihood ratio.
struct TiltedDynamics<'a> {
    tilted: &'a TiltedModel,
    log_lr: f64,
}

impl Dynamics for TiltedDynamics<'_> {
    fn arrival_time(&mut self, stream: usize, rng: &mut RngStream) -> f64 {
        let law = &self.tilted.arrivals[stream];
        let x = law.sample(rng);
        self.log_lr += law.log_likelihood_ratio(x);
        x
    }

    fn batch_size(&mut self, _rng: &mut RngStream) -> u64 {
        1
    }

    fn service_time(&mut self, server: usize, rng: &mut RngStream) -> f64 {
        let law = &self.tilted.services[server];
        let x = law.sample(rng);
        self.log_lr += law.log_likelihood_ratio(x);
        x
    }
}

/// Options for [`is_tail_estimate_with`].
#[derive(Debug, Clone)]
pub struct IsOptions {
    /// Event budget, shared by the base chain and all tilted branches.
    pub budget_events: u64,
    /// Tilt; `None` uses the decay rate α.
    pub theta: Option<f64>,
    /// Truncation for `K_α` servers; `None` uses [`default_truncation`].
    pub trunc: Option<f64>,
    /// Also run the plain cycle estimator with the same budget.
    pub naive_baseline: bool,
}

/// Plain cycle estimate with its cost.
#[derive(Debug, Clone, Serialize)]
pub struct NaiveEstimate {
    pub estimate: f64,
    pub se: f64,
    /// `se / estimate`, `+∞` when no cycle reached the level.
    pub relative_error: f64,
    pub cycles: usize,
    pub events: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IsEstimate {
    pub level: usize,
    pub theta: f64,
    pub trunc: Option<f64>,
    /// Estimate of `P(L >= ℓ | L >= k)`.
    pub estimate: f64,
    pub se: f64,
    pub relative_error: f64,
    pub cycles: usize,
    /// Tilted branches that reached `ℓ`.
    pub hits: usize,
    pub events: u64,
    pub naive: Option<NaiveEstimate>,
    /// `(RE² × events)` of importance sampling over that of the plain
    /// estimator; below one means importance sampling is more efficient.
    pub work_variance_ratio: Option<f64>,
}

fn relative_error(estimate: f64, se: f64) -> f64 {
    if estimate > 0.0 {
        se / estimate
    } else {
        f64::INFINITY
    }
}

/// Plain cycle-formula estimate of `P(L >= ℓ | L >= k)` with an event budget.
pub fn naive_tail_estimate(model: &QueueModel, level: usize, budget_events: u64, seed: u64) -> Result<NaiveEstimate> {
    model.ensure_stable()?;
    let skip = warmup_cycles(budget_events);
    let (exc, events) = collect_excursions(model, &[level], skip, Stop::Events(budget_events), RngStream::new(seed))?;
    if exc.len() < MIN_CYCLES {
        return Err(QaError::InsufficientCycles {
            found: exc.len(),
            needed: MIN_CYCLES,
        });
    }
    let groups = exc.len().min(MAX_GROUPS);
    let den = group_sums(&exc.iter().map(|e| e.length).collect::<Vec<_>>(), groups);
    let num = group_sums(&exc.iter().map(|e| e.above[0]).collect::<Vec<_>>(), groups);
    let (estimate, se) = ratio_from_groups(&num, &den);
    Ok(NaiveEstimate {
        estimate,
        se,
        relative_error: relative_error(estimate, se),
        cycles: exc.len(),
        events,
    })
}

fn warmup_cycles(budget_events: u64) -> usize {
    ((budget_events / 1000) as usize).clamp(10, 1000)
}

/// Importance-sampling estimate of `P(L >= ℓ | L >= k)` tilted at `θ`
/// (default α), with a plain baseline at the same budget.
pub fn is_tail_estimate(model: &QueueModel, level: usize, budget_events: u64, seed: u64, theta: Option<f64>) -> Result<IsEstimate> {
    is_tail_estimate_with(
        model,
        level,
        &IsOptions {
            budget_events,
            theta,
            trunc: None,
            naive_baseline: true,
        },
        seed,
    )
}

/// Importance sampling inside regenerative cycles.
///
/// A base chain runs with the original laws. At each up-crossing into
/// `L >= k` a branch is cloned from the current state and run with tilted
/// draws until it reaches `ℓ` or drops below `k`. After reaching `ℓ` it
/// continues with the original laws until it drops below `k`, and the time
/// it spends at or above `ℓ`, weighted by the accumulated likelihood ratio,
/// is that cycle's contribution. The base chain's cycle lengths form the
/// denominator of the cycle formula.
pub fn is_tail_estimate_with(model: &QueueModel, level: usize, opts: &IsOptions, seed: u64) -> Result<IsEstimate> {
    model.ensure_stable()?;
    let k = model.k as u64;
    if (level as u64) <= k {
        return Err(QaError::InvalidModel(format!("level {level} must exceed k = {k}")));
    }
    let theta = match opts.theta {
        Some(t) => t,
        None => {
            let alpha = solve_alpha(model)?.alpha;
            if alpha == 0.0 {
                return Err(QaError::RegimeUnsupported);
            }
            alpha
        }
    };
    let trunc = match opts.trunc {
        Some(v) => Some(v),
        None => default_truncation(model, theta)?,
    };
    let tilted = build_tilted(model, theta, trunc)?;
    if let Some(i) = tilted.services.iter().position(|l| !l.can_sample()) {
        return Err(QaError::InfiniteMean { server: i });
    }
    if tilted.arrivals.iter().any(|l| !l.can_sample()) {
        return Err(QaError::InvalidModel("tilted arrival law cannot be sampled".into()));
    }

    let budget = opts.budget_events;
    let skip = warmup_cycles(budget);
    let mut sim = Simulator::new(model, RngStream::new(seed));
    let mut base = BaseDynamics { model };
    let mut branch_events = 0u64;
    let mut seen = 0usize;
    let mut open: Option<(f64, f64)> = None; // (contribution, cycle start clock)
    let mut contrib = Vec::new();
    let mut lengths = Vec::new();
    let mut hits = 0usize;
    while sim.events + branch_events < budget {
        let before = sim.state.ell;
        sim.step(&mut base, |_, _| {}, false)?;
        let after = sim.state.ell;
        if before < k && after >= k {
            seen += 1;
            if seen > skip {
                let mut branch = Simulator::with_state(model, sim.rng.clone(), sim.state.clone());
                // Advance the base chain's stream so the branch draws are not reused.
                sim.rng = RngStream::new(sim.rng.next_u64());
                let (z, hit) = run_branch(&mut branch, &tilted, level as u64)?;
                branch_events += branch.events;
                if hit {
                    hits += 1;
                }
                open = Some((z, sim.state.clock));
            }
        } else if before >= k && after < k {
            if let Some((z, start)) = open.take() {
                contrib.push(z);
                lengths.push(sim.state.clock - start);
            }
        }
    }
    if contrib.len() < MIN_CYCLES {
        return Err(QaError::InsufficientCycles {
            found: contrib.len(),
            needed: MIN_CYCLES,
        });
    }
    let groups = contrib.len().min(MAX_GROUPS);
    let (estimate, se) = ratio_from_groups(&group_sums(&contrib, groups), &group_sums(&lengths, groups));
    let events = sim.events + branch_events;
    let re = relative_error(estimate, se);
    let naive = if opts.naive_baseline {
        Some(naive_tail_estimate(model, level, events, seed ^ 0x9e37_79b9_7f4a_7c15)?)
    } else {
        None
    };
    let work_variance_ratio = naive
        .as_ref()
        .map(|n| (re * re * events as f64) / (n.relative_error.powi(2) * n.events as f64));
    Ok(IsEstimate {
        level,
        theta,
        trunc,
        estimate,
        se,
        relative_error: re,
        cycles: contrib.len(),
        hits,
        events,
        naive,
        work_variance_ratio,
    })
}

/// Runs one branch from an up-crossing state; returns the weighted time at
/// or above `level` and whether the level was reached.
fn run_branch(branch: &mut Simulator<'_>, tilted: &TiltedModel, level: u64) -> Result<(f64, bool)> {
    let k = branch.model.k as u64;
    let mut dynamics = TiltedDynamics { tilted, log_lr: 0.0 };
    loop {
        branch.step(&mut dynamics, |_, _| {}, false)?;
        let ell = branch.state.ell;
        if ell < k {
            return Ok((0.0, false));
        }
        if ell >= level {
            break;
        }
    }
    let model = branch.model;
    let mut base = BaseDynamics { model };
    let mut above = 0.0;
    while branch.state.ell >= k {
        branch.step(
            &mut base,
            |s, dt| {
                if s.ell >= level {
                    above += dt;
                }
            },
            false,
        )?;
    }
    Ok((dynamics.log_lr.exp() * above, true))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(rate: f64) -> DistributionSpec {
        DistributionSpec::Exponential { rate }
    }

    #[test]
    fn exponential_tilts_are_rate_changes() {
        let m = QueueModel::single(exp(0.7), vec![exp(0.5), exp(0.5)]).unwrap();
        let t = build_tilted(&m, 0.3, None).unwrap();
        match t.arrivals[0].closed_form().unwrap() {
            DistributionSpec::Exponential { rate } => assert!((rate - 0.7 * 0.3f64.exp()).abs() < 1e-12),
            d => panic!("{d:?}"),
        }
        match t.services[1].closed_form().unwrap() {
            DistributionSpec::Exponential { rate } => assert!((rate - 0.5 * (-0.3f64).exp()).abs() < 1e-12),
            d => panic!("{d:?}"),
        }
    }

    #[test]
    fn zero_tilt_is_identity() {
        let m = QueueModel::single(exp(0.7), vec![exp(0.5), exp(0.5)]).unwrap();
        let t = build_tilted(&m, 0.0, None).unwrap();
        assert_eq!(t.arrivals[0].closed_form().unwrap(), exp(0.7));
        assert!(t.eta.iter().chain(&t.zeta).all(|&x| x == 0.0));
    }

    #[test]
    fn drift_at_alpha_for_mm2() {
        let m = QueueModel::single(exp(0.7), vec![exp(0.5), exp(0.5)]).unwrap();
        let t = build_tilted(&m, (1.0f64 / 0.7).ln(), None).unwrap();
        assert!((tilted_mean_drift(&t).unwrap() - 0.3).abs() < 1e-9);
        let t0 = build_tilted(&m, 0.0, None).unwrap();
        assert!((tilted_mean_drift(&t0).unwrap() + 0.3).abs() < 1e-12);
    }

    #[test]
    fn truncated_uniform_and_inversion_samplers_match_mgf() {
        let mut rng = RngStream::new(5);
        for (base, c, v) in [
            (DistributionSpec::Erlang { shape: 3, rate: 2.0 }, 0.8, Some(1.5)),
            (DistributionSpec::ParetoExp { r: 2.5, delta: 0.0 }, 0.3, Some(4.0)),
            (DistributionSpec::UniformShift { a: 0.5, b: 2.0 }, 1.2, None),
            (DistributionSpec::ParetoExp { r: 2.5, delta: 1.0 }, 0.6, None),
            (DistributionSpec::HyperExponential { probs: vec![0.3, 0.7], rates: vec![0.5, 3.0] }, -0.4, Some(2.0)),
        ] {
            let law = TiltedLaw::new(base.clone(), c, v, 0.0);
            let n = 200_000;
            let mut sum = 0.0;
            let mut sq = 0.0;
            for _ in 0..n {
                let x = law.sample(&mut rng);
                let y = v.map_or(x, |v| x.min(v));
                sum += y;
                sq += y * y;
            }
            let norm = v.map_or_else(|| base.mgf(c).to_f64(), |v| base.truncated_mgf(v, c));
            let exact = base.mgf_derivatives(v, c)[1] / norm;
            let mean = sum / n as f64;
            let sd = (sq / n as f64 - mean * mean).sqrt() / (n as f64).sqrt();
            assert!((mean - exact).abs() < 4.0 * sd, "{base:?}: {mean} vs {exact}");
        }
    }
}
