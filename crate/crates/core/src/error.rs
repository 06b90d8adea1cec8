use std::fmt;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, QaError>;

/// Why a rate-function equation has no finite solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoRootReason {
    /// θ ≥ θ̄ = −log F(0): the mass at zero alone keeps `e^θ F̂` above one.
    BeyondThetaBar,
    /// θ < θ*: the untruncated MGF is exhausted before reaching `e^{−θ}`.
    BeyondThetaStar,
    /// The batch-size MGF diverges at the requested θ.
    BatchMgfDiverges,
}

impl fmt::Display for NoRootReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NoRootReason::BeyondThetaBar => "beyond theta_bar",
            NoRootReason::BeyondThetaStar => "beyond theta_star",
            NoRootReason::BatchMgfDiverges => "batch mgf diverges",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QaError {
    #[error("no finite root: {reason}")]
    NoRoot { reason: NoRootReason },
    #[error("infinite second moment")]
    InfiniteSecondMoment,
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("unstable: rho = {rho} >= 1")]
    Unstable { rho: f64 },
    #[error("decay rate search exceeded theta = {bound} without a sign change")]
    NumericalRangeExceeded { bound: f64 },
    #[error("all limiting variances vanish")]
    DegenerateVariances,
    #[error("jump cascade exceeded {0} sub-steps")]
    CascadeOverflow(usize),
    #[error("only {found} completed cycles (need at least {needed})")]
    InsufficientCycles { found: usize, needed: usize },
    #[error("zero tail mass estimated at level {level}")]
    InsufficientTailMass { level: usize },
    #[error("theta = {theta} outside the admissible range [{lo}, {hi})")]
    ThetaOutOfRange { theta: f64, lo: f64, hi: f64 },
    #[error("decay rate is zero; supply an explicit tilt")]
    RegimeUnsupported,
    #[error("tilted service law of server {server} has an infinite mean; use a finite truncation")]
    InfiniteMean { server: usize },
    #[error("derivative unavailable at the plateau of the limit rate function")]
    DerivativeUnavailable,
    #[error("probe (v = {v}, theta = {theta}) not present in the estimate")]
    MissingProbe { v: f64, theta: f64 },
}

impl QaError {
    pub(crate) fn no_root(reason: NoRootReason) -> Self {
        QaError::NoRoot { reason }
    }
}
