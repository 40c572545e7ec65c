//! Streaming estimators and distribution-free test statistics.

use serde::{Deserialize, Serialize};

/// Welford online mean/variance accumulator with pairwise merging.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Chan et al. parallel combination.
    pub fn merge(&mut self, other: &Welford) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n as f64;
        self.m2 += other.m2 + delta * delta * (self.count as f64 * other.count as f64) / n as f64;
        self.count = n;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count > 1 {
            self.m2 / (self.count - 1) as f64
        } else {
            0.0
        }
    }

    /// Standard error of the mean.
    pub fn stderr(&self) -> f64 {
        if self.count > 1 {
            (self.variance() / self.count as f64).sqrt()
        } else {
            0.0
        }
    }
}

impl FromIterator<f64> for Welford {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut w = Welford::new();
        for x in iter {
            w.push(x);
        }
        w
    }
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(sample: &[f64], cdf: F) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

/// Central `level` acceptance band `[lo, hi]` for the number of successes
/// of `Binomial(n, p)`: `lo` is the smallest count with `P(X <= lo) > a`
/// and `hi` the smallest with `P(X <= hi) >= 1 - a`, where `a = (1 - level) / 2`.
pub fn binomial_band(n: u64, p: f64, level: f64) -> (u64, u64) {
    let a = 0.5 * (1.0 - level);
    let ln_choose = |k: u64| {
        libm::lgamma(n as f64 + 1.0) - libm::lgamma(k as f64 + 1.0) - libm::lgamma((n - k) as f64 + 1.0)
    };
    let pmf = |k: u64| {
        if p <= 0.0 {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        if p >= 1.0 {
            return if k == n { 1.0 } else { 0.0 };
        }
        (ln_choose(k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
    };
    let mut cdf = 0.0;
    let mut lo = None;
    for k in 0..=n {
        cdf += pmf(k);
        if lo.is_none() && cdf > a {
            lo = Some(k);
        }
        if cdf >= 1.0 - a - 1e-12 {
            return (lo.unwrap_or(k), k);
        }
    }
    (lo.unwrap_or(n), n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binomial_band_examples() {
        // Binomial(200, 1/64): mean 3.1
        let (lo, hi) = binomial_band(200, 1.0 / 64.0, 0.95);
        assert_eq!((lo, hi), (0, 7));
        let (lo, hi) = binomial_band(100, 0.5, 0.95);
        assert_eq!((lo, hi), (40, 60));
    }

    #[test]
    fn constant_stream_mean_is_exact() {
        let w: Welford = std::iter::repeat_n(0.7, 10_000).collect();
        assert_eq!(w.mean(), 0.7);
        assert_eq!(w.variance(), 0.0);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        let b: Vec<f64> = (0..100).map(|i| 1000.0 + i as f64).collect();
        assert_eq!(ks_two_sample(&a, &b), 1.0);
    }

    proptest! {
        #[test]
        fn merge_matches_single_pass(xs in prop::collection::vec(-1e3f64..1e3, 2..200), split in 0usize..200) {
            let split = split.min(xs.len());
            let whole: Welford = xs.iter().copied().collect();
            let mut left: Welford = xs[..split].iter().copied().collect();
            let right: Welford = xs[split..].iter().copied().collect();
            left.merge(&right);
            prop_assert_eq!(left.count(), whole.count());
            prop_assert!((left.mean() - whole.mean()).abs() <= 1e-9 * (1.0 + whole.mean().abs()));
            prop_assert!((left.variance() - whole.variance()).abs() <= 1e-7 * (1.0 + whole.variance()));
        }
    }
}
