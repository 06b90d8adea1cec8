use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A real number extended with ±∞, kept as an explicit tag rather than an
/// IEEE infinity so divergence can be matched on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ExtReal {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtReal {
    /// Maps IEEE infinities onto the tagged variants. NaN is not accepted.
    pub fn from_f64(x: f64) -> Self {
        debug_assert!(!x.is_nan());
        if x == f64::INFINITY {
            ExtReal::PosInf
        } else if x == f64::NEG_INFINITY {
            ExtReal::NegInf
        } else {
            ExtReal::Finite(x)
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtReal::Finite(x) => Some(x),
            _ => None,
        }
    }

    /// Lossy conversion back to `f64` for arithmetic at the edges.
    pub fn to_f64(self) -> f64 {
        match self {
            ExtReal::NegInf => f64::NEG_INFINITY,
            ExtReal::Finite(x) => x,
            ExtReal::PosInf => f64::INFINITY,
        }
    }

    pub fn neg(self) -> Self {
        match self {
            ExtReal::NegInf => ExtReal::PosInf,
            ExtReal::Finite(x) => ExtReal::Finite(-x),
            ExtReal::PosInf => ExtReal::NegInf,
        }
    }

    /// Natural logarithm of a nonnegative extended value.
    pub fn ln(self) -> Self {
        match self {
            ExtReal::PosInf => ExtReal::PosInf,
            ExtReal::Finite(x) if x > 0.0 => ExtReal::Finite(x.ln()),
            _ => ExtReal::NegInf,
        }
    }
}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => f.write_str("-inf"),
            ExtReal::Finite(x) => write!(f, "{x}"),
            ExtReal::PosInf => f.write_str("inf"),
        }
    }
}

/// Truncation level of a rate function: a finite `v`, no truncation, or the
/// `v ↑ ∞` limit object (written △), which can differ from the untruncated
/// root on the plateau below θ*.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    At(f64),
    Infinite,
    Limit,
}

impl Truncation {
    pub fn finite(self) -> Option<f64> {
        match self {
            Truncation::At(v) => Some(v),
            _ => None,
        }
    }

    /// Truncation from an `f64`, with `+∞` meaning no truncation.
    pub fn from_level(v: f64) -> Self {
        if v.is_finite() {
            Truncation::At(v)
        } else {
            Truncation::Infinite
        }
    }
}

impl fmt::Display for Truncation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Truncation::At(v) => write!(f, "{v}"),
            Truncation::Infinite => f.write_str("inf"),
            Truncation::Limit => f.write_str("limit"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_and_ln() {
        assert!(ExtReal::NegInf < ExtReal::Finite(-1e300));
        assert!(ExtReal::Finite(1e300) < ExtReal::PosInf);
        assert_eq!(ExtReal::Finite(0.0).ln(), ExtReal::NegInf);
        assert_eq!(ExtReal::PosInf.ln(), ExtReal::PosInf);
        assert_eq!(ExtReal::from_f64(f64::INFINITY), ExtReal::PosInf);
        assert_eq!(ExtReal::Finite(2.0).neg(), ExtReal::Finite(-2.0));
    }
}
