//! One-dimensional moment-matched distributions.
//!
//! The `m`-point Gauss–Hermite rule for the standard Gaussian is a discrete
//! distribution that agrees with `N(0, 1)` on every moment of order at most
//! `2m - 1`. Smoothing it as `sqrt(1 - delta) * X + sqrt(delta) * Y` with an
//! independent `Y ~ N(0, 1)` keeps those moments and gives an everywhere
//! positive density. Rules of consecutive orders `m` and `m + 1` have
//! interlaced, well-separated nodes, which yields the disjoint support sets
//! `S_A` and `S_B`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::numeric::{
    binomial, compensated_sum, gaussian_moment, hermite_he, log_sum_exp, std_normal_log_pdf,
    std_normal_sf, LN_SQRT_2PI,
};
use crate::rng::rng_from_seed;
use crate::{Error, Result};

pub const MAX_ORDER: usize = 64;

/// Largest `|t|` at which the density ratio `A(t)/G(t) - 1` is evaluated.
pub const RATIO_LIMIT: f64 = 40.0;

pub const MAX_MOMENT_ORDER: u32 = 200;

/// Nodes and weights of the `order`-point Gauss–Hermite rule for `N(0, 1)`.
///
/// The nodes are the roots of `He_m(t) = 2^{-m/2} H_m(t / sqrt 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    order: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `sum_i w_i * x_i^l`, see [`discrete_moment`].
    pub fn moment(&self, l: u32) -> f64 {
        discrete_moment(self, l)
    }
}

/// Builds the Gauss–Hermite rule of order `m` by the Golub–Welsch method.
///
/// Nodes are the eigenvalues of the symmetric Jacobi matrix of the
/// probabilists' Hermite recurrence, polished by one or two Newton steps on
/// the orthonormal polynomial. Weights use the Christoffel form
/// `1 / sum_{j<m} p_j(x_i)^2`, which keeps the far-tail weights accurate in
/// relative terms (squared eigenvector components lose them below `1e-16`).
pub fn gauss_hermite_rule(m: usize) -> Result<QuadratureRule> {
    if m == 0 || m > MAX_ORDER {
        return Err(Error::InvalidOrder(m));
    }
    let mut nodes = jacobi_eigenvalues(m)?;
    for x in nodes.iter_mut() {
        for _ in 0..8 {
            let (pm, pm1, _) = orthonormal_hermite(m, *x);
            let step = pm / ((m as f64).sqrt() * pm1);
            *x -= step;
            if step.abs() <= 1e-16 * x.abs().max(1.0) {
                break;
            }
        }
    }
    nodes.sort_by(f64::total_cmp);
    symmetrize(&mut nodes, true);

    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| 1.0 / orthonormal_hermite(m, x).2)
        .collect();
    symmetrize(&mut weights, false);
    let total = compensated_sum(weights.iter().copied());
    weights.iter_mut().for_each(|w| *w /= total);

    Ok(QuadratureRule { order: m, nodes, weights })
}

fn jacobi_eigenvalues(m: usize) -> Result<Vec<f64>> {
    let mut jacobi = nalgebra::DMatrix::<f64>::zeros(m, m);
    for k in 1..m {
        let b = (k as f64).sqrt();
        jacobi[(k - 1, k)] = b;
        jacobi[(k, k - 1)] = b;
    }
    let eig = nalgebra::SymmetricEigen::try_new(jacobi, 1e-15, 10_000)
        .ok_or(Error::EigenNonConvergence(m))?;
    Ok(eig.eigenvalues.iter().copied().collect())
}

/// Returns `(p_m(x), p_{m-1}(x), sum_{j<m} p_j(x)^2)` for the orthonormal
/// probabilists' Hermite polynomials `p_j = He_j / sqrt(j!)`.
fn orthonormal_hermite(m: usize, x: f64) -> (f64, f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    let mut sum_sq = 0.0;
    for j in 0..m {
        sum_sq += cur * cur;
        let next = (x * cur - (j as f64).sqrt() * prev) / ((j + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev, sum_sq)
}

/// Enforces `v[i] = +-v[n-1-i]` exactly (odd symmetry for nodes).
fn symmetrize(v: &mut [f64], odd: bool) {
    let n = v.len();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        if odd {
            let a = 0.5 * (v[j] - v[i]);
            v[i] = -a;
            v[j] = a;
        } else {
            let a = 0.5 * (v[i] + v[j]);
            v[i] = a;
            v[j] = a;
        }
    }
    if odd && n % 2 == 1 {
        v[n / 2] = 0.0;
    }
}

/// Exact moment `sum_i w_i * x_i^l` of the discrete rule, with compensated
/// summation.
///
/// Panics if `l > 200`.
pub fn discrete_moment(rule: &QuadratureRule, l: u32) -> f64 {
    assert!(l <= MAX_MOMENT_ORDER, "moment order {l} exceeds {MAX_MOMENT_ORDER}");
    compensated_sum(
        rule.nodes
            .iter()
            .zip(&rule.weights)
            .map(|(&x, &w)| w * x.powi(l as i32)),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn label(self) -> u8 {
        match self {
            Side::A => 0,
            Side::B => 1,
        }
    }

    pub fn from_label(label: u8) -> Side {
        if label == 0 {
            Side::A
        } else {
            Side::B
        }
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, t: f64) -> bool {
        self.lo <= t && t <= self.hi
    }

    /// Distance from `t` to the interval (zero inside).
    pub fn distance(&self, t: f64) -> f64 {
        if t < self.lo {
            self.lo - t
        } else if t > self.hi {
            t - self.hi
        } else {
            0.0
        }
    }

    pub fn distance_to(&self, other: &Interval) -> f64 {
        (other.lo - self.hi).max(self.lo - other.hi).max(0.0)
    }
}

/// A finite union of disjoint closed intervals, sorted by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSets {
    intervals: Vec<Interval>,
}

impl SupportSets {
    pub fn new(mut intervals: Vec<Interval>) -> Self {
        intervals.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        Self { intervals }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn contains(&self, t: f64) -> bool {
        self.locate(t).is_some()
    }

    fn locate(&self, t: f64) -> Option<&Interval> {
        let i = self.intervals.partition_point(|iv| iv.hi < t);
        self.intervals.get(i).filter(|iv| iv.contains(t))
    }

    /// Distance from `t` to the union (zero inside).
    pub fn distance(&self, t: f64) -> f64 {
        let i = self.intervals.partition_point(|iv| iv.hi < t);
        let right = self.intervals.get(i).map_or(f64::INFINITY, |iv| iv.distance(t));
        let left = i
            .checked_sub(1)
            .and_then(|j| self.intervals.get(j))
            .map_or(f64::INFINITY, |iv| iv.distance(t));
        left.min(right)
    }

    /// Infimum distance from `t` to the complement of the union (zero
    /// outside).
    pub fn exit_distance(&self, t: f64) -> f64 {
        self.locate(t).map_or(0.0, |iv| (t - iv.lo).min(iv.hi - t))
    }

    pub fn distance_to(&self, other: &SupportSets) -> f64 {
        self.intervals
            .iter()
            .flat_map(|a| other.intervals.iter().map(move |b| a.distance_to(b)))
            .fold(f64::INFINITY, f64::min)
    }

    /// Standard Gaussian mass of the union.
    pub fn gaussian_mass(&self) -> f64 {
        self.intervals
            .iter()
            .map(|iv| std_normal_sf(iv.lo) - std_normal_sf(iv.hi))
            .sum()
    }
}

/// Law of `sqrt(1 - delta) * X + sqrt(delta) * Y` with `X` a discrete
/// distribution and `Y ~ N(0, 1)` independent: a Gaussian mixture with
/// centers `sqrt(1 - delta) * x_i`, weights `w_i` and common variance `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedMixture {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    centers: Vec<f64>,
    delta: f64,
}

impl SmoothedMixture {
    /// `delta` in `(0, 1]`; `delta = 1` degenerates to `N(0, 1)` for any rule.
    pub fn new(rule: &QuadratureRule, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::InvalidDelta(delta));
        }
        let scale = (1.0 - delta).sqrt();
        Ok(Self {
            nodes: rule.nodes.clone(),
            weights: rule.weights.clone(),
            centers: rule.nodes.iter().map(|x| scale * x).collect(),
            delta,
        })
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn log_pdf(&self, t: f64) -> f64 {
        let terms: Vec<f64> = self
            .centers
            .iter()
            .zip(&self.weights)
            .map(|(&c, &w)| w.ln() - (t - c).powi(2) / (2.0 * self.delta))
            .collect();
        log_sum_exp(&terms) - 0.5 * self.delta.ln() - LN_SQRT_2PI
    }

    pub fn pdf(&self, t: f64) -> f64 {
        self.log_pdf(t).exp()
    }

    /// `ln(A(t) / G(t))`, evaluated without forming either density.
    pub fn log_ratio(&self, t: f64) -> f64 {
        let sd = self.delta.sqrt();
        let scale = (1.0 - self.delta).sqrt();
        let terms: Vec<f64> = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| {
                let z = (scale * t - x) / sd;
                w.ln() + 0.5 * x * x - 0.5 * z * z
            })
            .collect();
        log_sum_exp(&terms) - 0.5 * self.delta.ln()
    }

    /// `l`-th derivative of `A(t) / G(t)`.
    ///
    /// `A/G` is itself a sum of Gaussian bumps in `t`:
    /// `delta^{-1/2} sum_i w_i exp(x_i^2 / 2 - z_i^2 / 2)` with
    /// `z_i = (sqrt(1 - delta) t - x_i) / sqrt(delta)`, so each derivative is
    /// a Hermite polynomial in `z_i` times the same bump.
    pub fn ratio_derivative(&self, l: usize, t: f64) -> f64 {
        let sd = self.delta.sqrt();
        let scale = (1.0 - self.delta).sqrt();
        let slope = scale / sd;
        let sum = compensated_sum(self.nodes.iter().zip(&self.weights).map(|(&x, &w)| {
            let z = (scale * t - x) / sd;
            (w.ln() + 0.5 * x * x - 0.5 * z * z).exp() * hermite_he(l, z)
        }));
        let sign = if l % 2 == 0 { 1.0 } else { -1.0 };
        sign * slope.powi(l as i32) * sum / sd
    }

    /// Exact moment `E[t^l]` from the binomial expansion of the mixture.
    pub fn moment(&self, l: u32) -> f64 {
        let (a, b) = ((1.0 - self.delta).sqrt(), self.delta.sqrt());
        compensated_sum((0..=l).map(|j| {
            let mx = compensated_sum(
                self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * x.powi(j as i32)),
            );
            binomial(l, j) * a.powi(j as i32) * b.powi((l - j) as i32) * mx * gaussian_moment(l - j)
        }))
    }

    pub fn sampler(&self) -> MixtureSampler {
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = self
            .weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        if let Some(last) = cdf.last_mut() {
            *last = f64::INFINITY;
        }
        MixtureSampler { cdf, centers: self.centers.clone(), sd: self.delta.sqrt() }
    }
}

/// Ancestral sampler: choose a center by weight, add `sqrt(delta) * N(0,1)`.
#[derive(Debug, Clone)]
pub struct MixtureSampler {
    cdf: Vec<f64>,
    centers: Vec<f64>,
    sd: f64,
}

impl MixtureSampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c <= u);
        let noise: f64 = rng.sample(StandardNormal);
        self.centers[i] + self.sd * noise
    }
}

/// The smoothed pair `D_A` (order `m`) and `D_B` (order `m + 1`) with their
/// separated support sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneDimPair {
    m: usize,
    delta: f64,
    rule_a: QuadratureRule,
    rule_b: QuadratureRule,
    mix_a: SmoothedMixture,
    mix_b: SmoothedMixture,
    center_gap: f64,
    support_radius: f64,
    s_a: SupportSets,
    s_b: SupportSets,
    gap: f64,
}

/// Default smoothing variance `1 / m^4` (capped at `1/4` so that `m = 1`
/// stays inside `(0, 1/2)`).
pub fn default_delta(m: usize) -> f64 {
    (1.0 / (m as f64).powi(4)).min(0.25)
}

/// Builds `D_A`, `D_B` and their support sets.
///
/// Support intervals have radius `r = g / 3` around each center, where `g`
/// is the minimal distance between a center of `D_A` and a center of `D_B`;
/// the residual gap between `S_A` and `S_B` is then `g / 3`.
pub fn build_pair(m: usize, delta: Option<f64>) -> Result<OneDimPair> {
    if m == 0 || m >= MAX_ORDER {
        return Err(Error::InvalidOrder(m));
    }
    let delta = delta.unwrap_or_else(|| default_delta(m));
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidDelta(delta));
    }
    let rule_a = gauss_hermite_rule(m)?;
    let rule_b = gauss_hermite_rule(m + 1)?;
    let mix_a = SmoothedMixture::new(&rule_a, delta)?;
    let mix_b = SmoothedMixture::new(&rule_b, delta)?;

    let center_gap = mix_a
        .centers
        .iter()
        .flat_map(|a| mix_b.centers.iter().map(move |b| (a - b).abs()))
        .fold(f64::INFINITY, f64::min);
    let r = center_gap / 3.0;
    let around = |cs: &[f64]| {
        SupportSets::new(cs.iter().map(|&c| Interval { lo: c - r, hi: c + r }).collect())
    };
    let s_a = around(&mix_a.centers);
    let s_b = around(&mix_b.centers);
    let gap = s_a.distance_to(&s_b);
    if !(gap > 0.0) {
        return Err(Error::Invariant(format!("support sets not separated (gap {gap})")));
    }
    for set in [&s_a, &s_b] {
        if set.intervals.windows(2).any(|w| w[0].hi >= w[1].lo) {
            return Err(Error::Invariant("support intervals overlap".into()));
        }
    }
    Ok(OneDimPair {
        m,
        delta,
        rule_a,
        rule_b,
        mix_a,
        mix_b,
        center_gap,
        support_radius: r,
        s_a,
        s_b,
        gap,
    })
}

impl OneDimPair {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn rule(&self, side: Side) -> &QuadratureRule {
        match side {
            Side::A => &self.rule_a,
            Side::B => &self.rule_b,
        }
    }

    pub fn mixture(&self, side: Side) -> &SmoothedMixture {
        match side {
            Side::A => &self.mix_a,
            Side::B => &self.mix_b,
        }
    }

    pub fn support(&self, side: Side) -> &SupportSets {
        match side {
            Side::A => &self.s_a,
            Side::B => &self.s_b,
        }
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    /// Minimal distance between a center of `D_A` and one of `D_B`.
    pub fn center_gap(&self) -> f64 {
        self.center_gap
    }

    /// Minimal distance between `S_A` and `S_B`.
    pub fn gap(&self) -> f64 {
        self.gap
    }

    /// Bound `2m * P(N(0,1) > r / sqrt(delta))` on the mass that either
    /// distribution puts outside its own support set.
    pub fn tail_bound(&self) -> f64 {
        2.0 * self.m as f64 * std_normal_sf(self.support_radius / self.delta.sqrt())
    }

    /// Exact mass of `D_side` outside `S_side`.
    pub fn mass_outside(&self, side: Side) -> f64 {
        let mix = self.mixture(side);
        let sd = self.delta.sqrt();
        let inside: f64 = mix
            .centers
            .iter()
            .zip(&mix.weights)
            .map(|(&c, &w)| {
                w * self
                    .support(side)
                    .intervals
                    .iter()
                    .map(|iv| std_normal_sf((iv.lo - c) / sd) - std_normal_sf((iv.hi - c) / sd))
                    .sum::<f64>()
            })
            .sum();
        (1.0 - inside).max(0.0)
    }

    pub fn pdf(&self, side: Side, t: f64) -> f64 {
        self.mixture(side).pdf(t)
    }

    /// `a(t) = A(t)/G(t) - 1` (or the `B` analogue), computed from the log
    /// ratio. Fails for `|t| > 40`.
    pub fn ratio(&self, side: Side, t: f64) -> Result<f64> {
        if !(t.abs() <= RATIO_LIMIT) {
            return Err(Error::RatioOverflow(t));
        }
        Ok(self.mixture(side).log_ratio(t).exp_m1())
    }
}

pub fn pdf_a(pair: &OneDimPair, t: f64) -> f64 {
    pair.pdf(Side::A, t)
}

pub fn pdf_b(pair: &OneDimPair, t: f64) -> f64 {
    pair.pdf(Side::B, t)
}

pub fn ratio_a(pair: &OneDimPair, t: f64) -> Result<f64> {
    pair.ratio(Side::A, t)
}

/// Draws `n` i.i.d. points from `D_A` or `D_B`.
pub fn sample_pair(pair: &OneDimPair, side: Side, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample count must be at least 1".into()));
    }
    let sampler = pair.mixture(side).sampler();
    let mut rng = rng_from_seed(seed);
    Ok((0..n).map(|_| sampler.sample(&mut rng)).collect())
}

/// Separation between the nodes of consecutive rules `m` and `m + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RootSeparation {
    pub m: usize,
    pub separation: f64,
    /// `separation * sqrt(m)`: the empirical constant in `c / sqrt(m)`.
    pub scaled: f64,
    pub interlaced: bool,
}

/// Minimal node distance between the order-`m` and order-`m+1` rules for
/// `1 <= m < m_max`.
pub fn hermite_root_separation(m_max: usize) -> Result<Vec<RootSeparation>> {
    if !(2..=MAX_ORDER).contains(&m_max) {
        return Err(Error::InvalidArgument(format!("m_max = {m_max} outside 2..={MAX_ORDER}")));
    }
    let rules = (1..=m_max).map(gauss_hermite_rule).collect::<Result<Vec<_>>>()?;
    Ok(rules
        .windows(2)
        .map(|w| {
            let (lo, hi) = (&w[0], &w[1]);
            let separation = lo
                .nodes
                .iter()
                .flat_map(|a| hi.nodes.iter().map(move |b| (a - b).abs()))
                .fold(f64::INFINITY, f64::min);
            RootSeparation {
                m: lo.order,
                separation,
                scaled: separation * (lo.order as f64).sqrt(),
                interlaced: interlaces(&lo.nodes, &hi.nodes),
            }
        })
        .collect())
}

/// True when exactly one of `inner` lies strictly between each pair of
/// consecutive points of `outer` (`inner.len() + 1 == outer.len()`).
pub fn interlaces(inner: &[f64], outer: &[f64]) -> bool {
    inner.len() + 1 == outer.len()
        && outer.windows(2).all(|w| {
            inner.iter().filter(|&&x| w[0] < x && x < w[1]).count() == 1
        })
}

/// Maximum of `|a^{(l)}(t)|` over a fine grid covering the mixture centers,
/// for `l = 0..=l_max`.
pub fn ratio_derivative_table(pair: &OneDimPair, side: Side, l_max: usize) -> Vec<(usize, f64)> {
    let mix = pair.mixture(side);
    let sd = mix.delta.sqrt();
    let reach = mix.centers.iter().fold(0.0f64, |a, c| a.max(c.abs())) + 8.0 * sd;
    let step = sd / 20.0;
    let steps = (2.0 * reach / step).ceil() as usize;
    (0..=l_max)
        .map(|l| {
            let max = (0..=steps)
                .map(|i| -reach + i as f64 * step)
                .map(|t| {
                    let v = mix.ratio_derivative(l, t);
                    if l == 0 {
                        (v - 1.0).abs()
                    } else {
                        v.abs()
                    }
                })
                .fold(0.0, f64::max);
            (l, max)
        })
        .collect()
}

/// Log density of the standard Gaussian, re-exported for instance code.
pub fn gaussian_log_pdf(t: f64) -> f64 {
    std_normal_log_pdf(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{factorial, gaussian_abs_moment, integrate, std_normal_pdf};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn order_one_rule() {
        let r = gauss_hermite_rule(1).unwrap();
        assert_eq!(r.nodes(), &[0.0]);
        assert_eq!(r.weights(), &[1.0]);
    }

    #[test]
    fn order_two_rule() {
        // He_2 = t^2 - 1: nodes +-1, equal weights
        let r = gauss_hermite_rule(2).unwrap();
        assert_close(r.nodes()[0], -1.0, 1e-14);
        assert_close(r.nodes()[1], 1.0, 1e-14);
        assert_close(r.weights()[0], 0.5, 1e-14);
        assert_close(r.weights()[1], 0.5, 1e-14);
    }

    #[test]
    fn order_three_rule() {
        // He_3 = t^3 - 3t: nodes 0, +-sqrt 3 with weights 1/6, 2/3, 1/6
        let r = gauss_hermite_rule(3).unwrap();
        let s3 = 3f64.sqrt();
        for (x, e) in r.nodes().iter().zip([-s3, 0.0, s3]) {
            assert_close(*x, e, 1e-14);
        }
        for (w, e) in r.weights().iter().zip([1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0]) {
            assert_close(*w, e, 1e-14);
        }
        assert_close(r.moment(2), 1.0, 1e-14);
        assert_close(r.moment(4), 3.0, 1e-13);
        assert_close(r.moment(6), 9.0, 1e-12);
    }

    #[test]
    fn rejects_out_of_range_orders() {
        assert_eq!(gauss_hermite_rule(0), Err(Error::InvalidOrder(0)));
        assert_eq!(gauss_hermite_rule(65), Err(Error::InvalidOrder(65)));
        assert!(gauss_hermite_rule(64).is_ok());
    }

    #[test]
    fn rule_invariants_up_to_64() {
        for m in 1..=MAX_ORDER {
            let r = gauss_hermite_rule(m).unwrap();
            assert!(r.weights().iter().all(|&w| w > 0.0), "m={m}");
            assert_close(r.weights().iter().sum::<f64>(), 1.0, 1e-12);
            for i in 0..m {
                assert_close(r.nodes()[i], -r.nodes()[m - 1 - i], 1e-12);
            }
            assert!(r.nodes().windows(2).all(|w| w[0] < w[1]));
            let tol = if m <= 16 { 1e-8 } else { 1e-5 };
            for l in 0..(2 * m as u32) {
                let err = (r.moment(l) - gaussian_moment(l)).abs() / gaussian_abs_moment(l);
                assert!(err <= tol, "m={m} l={l} err={err:e}");
            }
        }
    }

    #[test]
    fn discrete_moment_examples() {
        let r2 = gauss_hermite_rule(2).unwrap();
        assert_eq!(discrete_moment(&r2, 3), 0.0);
        assert_close(discrete_moment(&r2, 4), 1.0, 1e-14);
        let r3 = gauss_hermite_rule(3).unwrap();
        assert_close(discrete_moment(&r3, 4), 3.0, 1e-13);
    }

    #[test]
    fn smoothed_moments_match_binomial_expansion() {
        // m = 2, delta = 1/4: E t^2 = 1, E t^4 = (1-d)^2 + 6(1-d)d + 3d^2 = 15/8
        let p = build_pair(2, Some(0.25)).unwrap();
        assert_close(p.mixture(Side::A).moment(2), 1.0, 1e-14);
        assert_close(p.mixture(Side::A).moment(4), 15.0 / 8.0, 1e-14);
    }

    #[test]
    fn smoothed_pair_matches_moments_through_2m_minus_1() {
        for m in [2usize, 3, 4, 6, 8, 12, 16] {
            let p = build_pair(m, None).unwrap();
            for l in 0..=(2 * m as u32 - 1) {
                let err = (p.mixture(Side::A).moment(l) - gaussian_moment(l)).abs() / gaussian_abs_moment(l);
                assert!(err <= 1e-6, "A m={m} l={l}");
            }
            for l in 0..=(2 * m as u32 + 1) {
                let err = (p.mixture(Side::B).moment(l) - gaussian_moment(l)).abs() / gaussian_abs_moment(l);
                assert!(err <= 1e-6, "B m={m} l={l}");
            }
            // first mismatch is at order 2m, where the rule misses by exactly m!
            let l = 2 * m as u32;
            let shortfall = gaussian_moment(l) - p.mixture(Side::A).moment(l);
            let expected = (1.0 - p.delta()).powi(m as i32) * factorial(m as u32);
            assert!((shortfall - expected).abs() <= 1e-9 * gaussian_moment(l), "m={m} shortfall={shortfall}");
        }
    }

    #[test]
    fn order_one_pair_structure() {
        let p = build_pair(1, None).unwrap();
        assert_eq!(p.mixture(Side::A).centers(), &[0.0]);
        assert_eq!(p.support(Side::A).intervals().len(), 1);
        assert_eq!(p.support(Side::B).intervals().len(), 2);
        let c = (1.0 - p.delta()).sqrt();
        assert_close(p.mixture(Side::B).centers()[1], c, 1e-14);
        assert_close(p.center_gap(), c, 1e-14);
    }

    #[test]
    fn build_pair_rejects_bad_delta() {
        assert_eq!(build_pair(3, Some(0.5)).unwrap_err(), Error::InvalidDelta(0.5));
        assert_eq!(build_pair(3, Some(0.0)).unwrap_err(), Error::InvalidDelta(0.0));
        assert!(build_pair(0, None).is_err());
    }

    #[test]
    fn support_geometry() {
        for m in 1..=20 {
            let p = build_pair(m, None).unwrap();
            assert!(p.gap() > 0.0);
            assert_close(p.gap(), p.center_gap() / 3.0, 1e-12);
            for side in [Side::A, Side::B] {
                let mix = p.mixture(side);
                let ivs = p.support(side).intervals();
                assert_eq!(ivs.len(), mix.centers().len());
                for (iv, c) in ivs.iter().zip(mix.centers()) {
                    assert_close(iv.lo, c - p.support_radius(), 1e-14);
                    assert_close(iv.hi, c + p.support_radius(), 1e-14);
                }
                assert!(p.mass_outside(side) <= p.tail_bound() + 1e-15);
            }
        }
    }

    #[test]
    fn degenerate_unit_smoothing_is_gaussian() {
        let r = gauss_hermite_rule(1).unwrap();
        let mix = SmoothedMixture::new(&r, 1.0).unwrap();
        for t in [-3.0, -0.5, 0.0, 1.2, 4.0] {
            assert_close(mix.pdf(t), std_normal_pdf(t), 1e-15);
            assert_close(mix.log_ratio(t), 0.0, 1e-14);
        }
    }

    #[test]
    fn pdf_two_component_value() {
        // m = 2, delta = 1/4: centers +-sqrt(3/4), A(0) = N(0.866, 0.25) density at 0
        let p = build_pair(2, Some(0.25)).unwrap();
        let c = 0.75f64.sqrt();
        let s = 0.5;
        let expected = (-(c * c) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
        assert_close(pdf_a(&p, 0.0), expected, 1e-15);
    }

    #[test]
    fn pdfs_are_positive_and_normalized() {
        for m in [2, 4, 8] {
            let p = build_pair(m, None).unwrap();
            for side in [Side::A, Side::B] {
                let mix = p.mixture(side);
                let v = integrate(|t| mix.pdf(t), -20.0, 20.0, mix.centers(), 1e-13, 1e-12).unwrap();
                assert_close(v, 1.0, 1e-8);
                for t in [-19.0, -3.3, 0.0, 0.1, 7.0] {
                    assert!(mix.pdf(t) > 0.0 || mix.log_pdf(t).is_finite());
                }
            }
        }
    }

    #[test]
    fn ratio_kills_low_moments() {
        for m in [2usize, 4, 6, 8] {
            let p = build_pair(m, None).unwrap();
            let mix = p.mixture(Side::A);
            for l in 0..=m as i32 {
                let v = integrate(
                    |t| t.powi(l) * (mix.pdf(t) - std_normal_pdf(t)),
                    -40.0,
                    40.0,
                    mix.centers(),
                    1e-12,
                    1e-12,
                )
                .unwrap();
                assert!(v.abs() <= 1e-6, "m={m} l={l} v={v:e}");
            }
        }
        // m = 2, delta = 1/4: the fourth moment is not killed
        let p = build_pair(2, Some(0.25)).unwrap();
        let mix = p.mixture(Side::A);
        let v4 = integrate(|t| t.powi(4) * (mix.pdf(t) - std_normal_pdf(t)), -40.0, 40.0, mix.centers(), 1e-13, 1e-12)
            .unwrap();
        assert_close(v4, -9.0 / 8.0, 1e-9);
    }

    #[test]
    fn ratio_signals_overflow_region() {
        let p = build_pair(3, None).unwrap();
        assert!(matches!(ratio_a(&p, 41.0), Err(Error::RatioOverflow(_))));
        assert!(ratio_a(&p, 40.0).is_ok());
        assert!(ratio_a(&p, f64::NAN).is_err());
    }

    #[test]
    fn ratio_agrees_with_density_quotient() {
        let p = build_pair(4, None).unwrap();
        for t in [-2.0, -0.7, 0.0, 0.31, 1.9] {
            let direct = pdf_a(&p, t) / std_normal_pdf(t) - 1.0;
            assert_close(ratio_a(&p, t).unwrap(), direct, 1e-10 * (1.0 + direct.abs()));
            assert_close(p.mixture(Side::A).ratio_derivative(0, t), direct + 1.0, 1e-10 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn ratio_derivatives_match_finite_differences() {
        let p = build_pair(3, Some(0.1)).unwrap();
        let mix = p.mixture(Side::A);
        let h = 1e-5;
        for l in 1..=3 {
            for t in [-1.1, 0.2, 0.9] {
                let fd = (mix.ratio_derivative(l - 1, t + h) - mix.ratio_derivative(l - 1, t - h)) / (2.0 * h);
                let an = mix.ratio_derivative(l, t);
                assert!((fd - an).abs() <= 1e-5 * (1.0 + an.abs()), "l={l} t={t}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn sampler_is_deterministic_and_centered() {
        let p = build_pair(2, None).unwrap();
        assert!(sample_pair(&p, Side::A, 0, 1).is_err());
        let a = sample_pair(&p, Side::A, 1000, 9).unwrap();
        assert_eq!(a, sample_pair(&p, Side::A, 1000, 9).unwrap());
        assert_ne!(a, sample_pair(&p, Side::A, 1000, 10).unwrap());

        let n = 100_000;
        let xs = sample_pair(&p, Side::A, n, 3).unwrap();
        let mean = xs.iter().sum::<f64>() / n as f64;
        // variance is exactly 1
        assert!(mean.abs() <= 4.0 / (n as f64).sqrt());
        let inside = xs.iter().filter(|&&x| p.support(Side::A).contains(x)).count() as f64 / n as f64;
        let mc = 4.0 * (0.25 / n as f64).sqrt();
        assert!(inside >= 1.0 - p.tail_bound() - mc);
    }

    #[test]
    fn root_separation_small_orders() {
        let seps = hermite_root_separation(3).unwrap();
        assert_eq!(seps.len(), 2);
        assert_close(seps[0].separation, 1.0, 1e-14);
        assert_close(seps[1].separation, 3f64.sqrt() - 1.0, 1e-14);
        assert!(seps.iter().all(|s| s.interlaced));
        assert!(hermite_root_separation(1).is_err());
        assert!(hermite_root_separation(65).is_err());
    }

    #[test]
    fn root_separation_constant() {
        let seps = hermite_root_separation(51).unwrap();
        assert!(seps.iter().all(|s| s.interlaced));
        let c = seps.iter().map(|s| s.scaled).fold(f64::INFINITY, f64::min);
        assert!(c >= 0.5, "fitted constant {c}");
    }

    #[test]
    fn support_set_distances() {
        let s = SupportSets::new(vec![Interval { lo: 2.0, hi: 3.0 }, Interval { lo: -1.0, hi: 1.0 }]);
        assert!(s.contains(0.4));
        assert_close(s.exit_distance(0.4), 0.6, 1e-15);
        assert_eq!(s.distance(0.4), 0.0);
        assert_close(s.distance(1.6), 0.4, 1e-15);
        assert_close(s.distance(-3.0), 2.0, 1e-15);
        assert_close(s.distance(10.0), 7.0, 1e-15);
        assert_eq!(s.exit_distance(1.5), 0.0);
    }
}
