//! Small estimation helpers: pooled moments, batch means, ratio estimators,
//! the jackknife, least squares and Kolmogorov–Smirnov distances.

/// Streaming mean and variance (Welford), mergeable across replications.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MeanVar {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl MeanVar {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Pairwise pooling of two independent summaries.
    pub fn merge(&mut self, other: &MeanVar) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean, assuming independent observations.
    pub fn se(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Mean and standard error from (approximately independent) batch values.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let mut mv = MeanVar::default();
    for &v in values {
        mv.push(v);
    }
    (mv.mean, mv.se())
}

/// Ratio estimator `Σx / Σy` over batches with a delta-method standard error.
pub fn ratio_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    let b = x.len();
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let r = sx / sy;
    if b < 2 {
        return (r, 0.0);
    }
    let ybar = sy / b as f64;
    let ss: f64 = x.iter().zip(y).map(|(xi, yi)| (xi - r * yi).powi(2)).sum();
    (r, (ss / (b as f64 * (b - 1) as f64)).sqrt() / ybar)
}

/// Jackknife estimate and standard error of `stat` over `groups` by
/// leaving one group out at a time.
pub fn jackknife<G, F>(groups: &[G], stat: F) -> (f64, f64)
where
    F: Fn(&mut dyn Iterator<Item = &G>) -> f64,
{
    let g = groups.len();
    let full = stat(&mut groups.iter());
    if g < 2 {
        return (full, 0.0);
    }
    let loo: Vec<f64> = (0..g)
        .map(|j| stat(&mut groups.iter().enumerate().filter(|(i, _)| *i != j).map(|(_, x)| x)))
        .collect();
    let mean = loo.iter().sum::<f64>() / g as f64;
    let var = loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>() * (g - 1) as f64 / g as f64;
    (full, var.sqrt())
}

/// Least-squares line `y ≈ a + b x`; returns `(b, a)`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Kolmogorov–Smirnov distance between a discrete law with atoms
/// `(x_j, p_j)` (sorted by `x`) and a continuous CDF. Both one-sided limits
/// of the empirical CDF are compared at every atom.
pub fn ks_distance_discrete<F: Fn(f64) -> f64>(atoms: &[(f64, f64)], cdf: F) -> f64 {
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    let mut acc = 0.0;
    let mut d: f64 = 0.0;
    for &(x, p) in atoms {
        let g = cdf(x);
        d = d.max((acc / total - g).abs());
        acc += p;
        d = d.max((acc / total - g).abs());
    }
    d
}

/// CDF of the exponential law with the given rate.
pub fn exponential_cdf(rate: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| if x <= 0.0 { 0.0 } else { -(-rate * x).exp_m1() }
}
