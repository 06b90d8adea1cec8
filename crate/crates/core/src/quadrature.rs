//! Adaptive Gauss–Kronrod (7/15) quadrature.

use std::collections::BinaryHeap;

/// Absolute error target used throughout the crate.
pub const ABS_TOL: f64 = 1e-12;
/// Relative error target, active when integrals are large.
pub const REL_TOL: f64 = 1e-13;
/// Maximum number of interval bisections per integral.
pub const MAX_SUBDIVISIONS: usize = 10_000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Integrates `f` over the finite interval `[a, b]`, bisecting the interval
/// with the largest error estimate until the total error is below
/// `max(ABS_TOL, REL_TOL * |I|)` or the subdivision budget is spent.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    integrate_tol(&f, a, b, ABS_TOL, REL_TOL)
}

pub fn integrate_tol<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs: f64, rel: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if a > b {
        return -integrate_tol(f, b, a, abs, rel);
    }
    let (v, e) = gk15(f, a, b);
    let mut total = v;
    let mut total_err = e;
    if !total.is_finite() {
        return total;
    }
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v, err: e });
    let mut splits = 0;
    while total_err > abs.max(rel * total.abs()) && splits < MAX_SUBDIVISIONS {
        let Some(p) = heap.pop() else { break };
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            heap.push(p);
            break;
        }
        let (v1, e1) = gk15(f, p.a, m);
        let (v2, e2) = gk15(f, m, p.b);
        total += v1 + v2 - p.value;
        total_err += e1 + e2 - p.err;
        if !total.is_finite() {
            return total;
        }
        heap.push(Piece { a: p.a, b: m, value: v1, err: e1 });
        heap.push(Piece { a: m, b: p.b, value: v2, err: e2 });
        splits += 1;
    }
    // Re-sum to shed accumulated cancellation in the running total.
    heap.iter().map(|p| p.value).sum()
}

/// Integrates `f` over `[a, b]` in the doubling pieces `[a, a+1], [a+1, a+2],
/// [a+2, a+4], …`, so integrands concentrated near `a` are resolved on long
/// intervals.
pub fn integrate_doubling<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    let mut sum = 0.0;
    let mut lo = a;
    let mut width = 1.0;
    while lo < b {
        let hi = (lo + width).min(b);
        sum += integrate(&f, lo, hi);
        lo = hi;
        width *= 2.0;
    }
    sum
}

/// Integrates `f` over `[a, ∞)` by summing adaptive integrals over the
/// doubling intervals `[a, a+1], [a+1, a+2], [a+2, a+4], …` until three
/// consecutive pieces are negligible relative to the running sum.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64) -> f64 {
    let mut sum = 0.0;
    let mut lo = a;
    let mut width = 1.0;
    let mut quiet = 0;
    for _ in 0..2000 {
        let hi = lo + width;
        let piece = integrate_tol(&f, lo, hi, ABS_TOL * 1e-3, REL_TOL);
        if !piece.is_finite() {
            return piece;
        }
        sum += piece;
        if piece.abs() <= 1e-16 * sum.abs().max(1e-300) || piece == 0.0 {
            quiet += 1;
            if quiet >= 3 {
                break;
            }
        } else {
            quiet = 0;
        }
        lo = hi;
        if lo > 1e300 {
            break;
        }
        width *= 2.0;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_exponential() {
        let v = integrate(|x| x * x, 0.0, 3.0);
        assert!((v - 9.0).abs() < 1e-13);
        let v = integrate(|x: f64| (-x).exp(), 0.0, 1.0);
        assert!((v - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn semi_infinite_exponential_and_power() {
        let v = integrate_to_infinity(|x: f64| (-2.0 * x).exp(), 0.0);
        assert!((v - 0.5).abs() < 1e-13);
        // ∫ (1+x)^{-3} = 1/2
        let v = integrate_to_infinity(|x: f64| (1.0 + x).powi(-3), 0.0);
        assert!((v - 0.5).abs() < 1e-12, "{v}");
    }

    #[test]
    fn kink_is_resolved() {
        let v = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0);
        assert!((v - (0.045 + 0.245)).abs() < 1e-12);
    }
}
