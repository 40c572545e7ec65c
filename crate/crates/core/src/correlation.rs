//! Chi-correlations of planted distributions relative to `N(0, I_d)`.
//!
//! For densities `P_1, P_2` and reference `P`, the chi-correlation is
//! `E_P[(P_1 / P)(P_2 / P)] - 1`. For one planted instance against itself
//! it factorizes over the frame into `(1 + c)^k - 1`, with `c` the
//! one-dimensional chi-square divergence of `D_A` from `N(0, 1)`. Across two
//! different frames it is estimated by Monte Carlo.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::instance::HardInstance;
use crate::numeric::{factorial, integrate, std_normal_log_pdf};
use crate::quad1d::{gauss_hermite_rule, OneDimPair, Side, SmoothedMixture};
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::Welford;
use crate::{Error, Result};

/// Largest order accepted by [`chi_onedim`].
pub const CHI_MAX_ORDER: usize = 16;

/// Monte Carlo draws per independently seeded chunk.
const MC_CHUNK: usize = 16_384;

/// Edge value below which the integration window is considered wide enough.
const EDGE_TOL: f64 = 1e-22;
const MAX_WINDOW: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ChiMethod {
    AnalyticFactorized,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PairDescription {
    pub first: usize,
    pub second: usize,
    pub sides: [Side; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ChiReport {
    pub value: f64,
    pub stderr: f64,
    pub method: ChiMethod,
    pub n_samples: u64,
    pub pair: PairDescription,
}

/// `E_{t ~ N(0,1)}[(A(t)/G(t))^2] - 1` for a smoothed mixture, by adaptive
/// quadrature of `exp(2 log A - log G)`.
pub fn chi_mixture(mix: &SmoothedMixture) -> Result<f64> {
    let f = |t: f64| (2.0 * mix.log_pdf(t) - std_normal_log_pdf(t)).exp();
    let reach = mix.centers().iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let mut window = reach + 2.0;
    while f(window).max(f(-window)) > EDGE_TOL {
        window += 2.0;
        if window > MAX_WINDOW {
            return Err(Error::TailOverflow(f(window).max(f(-window))));
        }
    }
    let total = integrate(f, -window, window, mix.centers(), 1e-14, 1e-13)?;
    let c = total - 1.0;
    if c < 0.0 && c > -1e-10 {
        return Ok(0.0);
    }
    Ok(c)
}

/// One-dimensional factor `c` for side `side` of the pair.
pub fn chi_onedim(pair: &OneDimPair, side: Side) -> Result<f64> {
    if pair.m() > CHI_MAX_ORDER {
        return Err(Error::Precondition(format!("chi_onedim needs m <= {CHI_MAX_ORDER}, got {}", pair.m())));
    }
    chi_mixture(pair.mixture(side))
}

/// `E_{t ~ N(0,1)}[t^l a(t)] = int t^l (A - G)`, zero for `l <= m` on side A.
pub fn ratio_moment(mix: &SmoothedMixture, l: i32) -> Result<f64> {
    integrate(
        |t| t.powi(l) * (mix.pdf(t) - (std_normal_log_pdf(t)).exp()),
        -40.0,
        40.0,
        mix.centers(),
        1e-13,
        1e-12,
    )
}

/// Analytic `(1 + c)^k - 1` for the planted class-0 distribution against
/// itself.
pub fn chi_same(instance: &HardInstance) -> Result<ChiReport> {
    let c = chi_onedim(instance.pair(), Side::A)?;
    let k = instance.params().k as i32;
    Ok(ChiReport {
        value: (1.0 + c).powi(k) - 1.0,
        stderr: 0.0,
        method: ChiMethod::AnalyticFactorized,
        n_samples: 0,
        pair: PairDescription { first: instance.planted(), second: instance.planted(), sides: [Side::A, Side::A] },
    })
}

/// Monte Carlo over full-dimensional `x ~ N(0, I_d)` of
/// `prod_i (1 + a(<x, u_i>))^2 - 1`.
pub fn chi_same_mc(instance: &HardInstance, n_samples: usize, seed: u64) -> Result<ChiReport> {
    if n_samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let mix = instance.pair().mixture(Side::A);
    let frame = instance.planted_frame();
    let d = frame.nrows();
    let acc = chunked(n_samples, seed, |rng| {
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        crate::instance::project(frame, &x)
            .into_iter()
            .map(|t| mix.log_ratio(t).exp().powi(2))
            .product::<f64>()
            - 1.0
    });
    Ok(mc_report(
        acc,
        PairDescription { first: instance.planted(), second: instance.planted(), sides: [Side::A, Side::A] },
    ))
}

/// Monte Carlo estimate of the chi-correlation between the class-0
/// distributions planted on two frames.
///
/// Only the `2k` projections of `x ~ N(0, I_d)` enter the integrand, so they
/// are drawn directly as a Gaussian vector with the frames' Gram matrix as
/// covariance.
pub fn chi_cross(first: &HardInstance, second: &HardInstance, n_samples: usize, seed: u64) -> Result<ChiReport> {
    if n_samples < 10_000 {
        return Err(Error::Precondition("chi_cross needs at least 10^4 samples".into()));
    }
    check_compatible(first, second)?;
    let mix = first.pair().mixture(Side::A);
    let vectors = hstack(&[first.planted_frame(), second.planted_frame()]);
    let sampler = GaussianProjections::new(&vectors);
    let acc = chunked(n_samples, seed, |rng| {
        let p = sampler.draw(rng);
        p.iter().map(|&t| mix.log_ratio(t).exp()).product::<f64>() - 1.0
    });
    Ok(mc_report(
        acc,
        PairDescription { first: first.planted(), second: second.planted(), sides: [Side::A, Side::A] },
    ))
}

fn check_compatible(first: &HardInstance, second: &HardInstance) -> Result<()> {
    let (a, b) = (first.params(), second.params());
    if a.d != b.d || a.k != b.k {
        return Err(Error::DimensionMismatch { expected: a.d * a.k, found: b.d * b.k });
    }
    if first.pair() != second.pair() {
        return Err(Error::InvalidArgument("instances use different one-dimensional pairs".into()));
    }
    Ok(())
}

/// Monte Carlo estimate and standard error of
/// `E[prod_{i in S} a(<x,u_i>) * prod_{i in T} a^{(l_i)}(<x, w_i>) <x, v_i - w_i>^{l_i} / l_i!]`
/// where `u` is the first frame, `v` the second and `w_i = v_i - proj_U v_i`.
/// The expectation is exactly zero whenever `|S| >= |T|`.
pub fn coeff_killing_check(
    first: &HardInstance,
    second: &HardInstance,
    s: &[usize],
    t: &[usize],
    l: &[usize],
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_compatible(first, second)?;
    coeff_killing_mc(
        first.pair().mixture(Side::A),
        first.pair().m(),
        first.planted_frame(),
        second.planted_frame(),
        s,
        t,
        l,
        n_samples,
        seed,
    )
}

/// [`coeff_killing_check`] for an arbitrary mixture and pair of frames;
/// `max_order` bounds the entries of `l`.
#[allow(clippy::too_many_arguments)]
pub fn coeff_killing_mc(
    mix: &SmoothedMixture,
    max_order: usize,
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    s: &[usize],
    t: &[usize],
    l: &[usize],
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let k = u.ncols();
    let valid = |set: &[usize]| {
        !set.is_empty() && set.iter().all(|&i| i < k) && {
            let mut sorted = set.to_vec();
            sorted.sort_unstable();
            sorted.windows(2).all(|w| w[0] != w[1])
        }
    };
    if !valid(s) || !valid(t) {
        return Err(Error::Precondition("S and T must be non-empty sets of frame indices".into()));
    }
    if s.len() < t.len() {
        return Err(Error::Precondition(format!("|S| = {} < |T| = {}", s.len(), t.len())));
    }
    if l.len() != t.len() || l.iter().any(|&o| o > max_order) {
        return Err(Error::Precondition(format!("l must assign an order in 0..={max_order} to each element of T")));
    }
    if n_samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let d = u.nrows();
    let mut cols: Vec<DVector<f64>> = s.iter().map(|&i| u.column(i).into_owned()).collect();
    let mut inside = Vec::new();
    for &i in t {
        let vi = v.column(i).into_owned();
        let w = u * (u.transpose() * &vi);
        cols.push(&vi - &w);
        inside.push(w);
    }
    cols.extend(inside);
    let vectors = DMatrix::from_columns(&cols);
    debug_assert_eq!(vectors.nrows(), d);
    let sampler = GaussianProjections::new(&vectors);
    let (ns, nt) = (s.len(), t.len());
    let inv_fact: Vec<f64> = l.iter().map(|&o| 1.0 / factorial(o as u32)).collect();
    let acc = chunked(n_samples, seed, |rng| {
        let p = sampler.draw(rng);
        let mut prod: f64 = p[..ns].iter().map(|&x| mix.log_ratio(x).exp_m1()).product();
        for j in 0..nt {
            let (q, r) = (p[ns + j], p[ns + nt + j]);
            let deriv = if l[j] == 0 { mix.log_ratio(q).exp_m1() } else { mix.ratio_derivative(l[j], q) };
            prod *= deriv * r.powi(l[j] as i32) * inv_fact[j];
        }
        prod
    });
    Ok((acc.mean(), acc.stderr()))
}

/// `max_i w_i exp(x_i^2 / 2)` over the nodes of the order-`m` rule, for
/// `m = 1..=m_max`.
pub fn weighted_node_table(m_max: usize) -> Result<Vec<(usize, f64)>> {
    (1..=m_max)
        .map(|m| {
            let r = gauss_hermite_rule(m)?;
            let v = r
                .nodes()
                .iter()
                .zip(r.weights())
                .map(|(x, w)| w * (0.5 * x * x).exp())
                .fold(0.0, f64::max);
            Ok((m, v))
        })
        .collect()
}

/// Draws `V^T x` for `x ~ N(0, I_d)` using a symmetric square root of the
/// Gram matrix `V^T V` (which may be singular).
struct GaussianProjections {
    root: DMatrix<f64>,
}

impl GaussianProjections {
    fn new(vectors: &DMatrix<f64>) -> Self {
        let gram = vectors.transpose() * vectors;
        let eig = nalgebra::SymmetricEigen::new(gram);
        let scale = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| v.max(0.0).sqrt()));
        Self { root: &eig.eigenvectors * scale }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let r = self.root.ncols();
        let z = DVector::from_fn(r, |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.root * z).iter().copied().collect()
    }
}

fn hstack(frames: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols: Vec<DVector<f64>> = frames
        .iter()
        .flat_map(|f| f.column_iter().map(|c| c.into_owned()))
        .collect();
    DMatrix::from_columns(&cols)
}

/// Parallel Monte Carlo in fixed chunks seeded by `derive_seed(seed, c)`,
/// merged in chunk order so the result does not depend on thread count.
fn chunked<F>(n: usize, seed: u64, f: F) -> Welford
where
    F: Fn(&mut crate::rng::StdRng) -> f64 + Sync,
{
    let chunks = n.div_ceil(MC_CHUNK);
    let parts: Vec<Welford> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from_seed(derive_seed(seed, c as u64));
            let len = MC_CHUNK.min(n - c * MC_CHUNK);
            (0..len).map(|_| f(&mut rng)).collect()
        })
        .collect();
    let mut acc = Welford::new();
    for p in &parts {
        acc.merge(p);
    }
    acc
}

fn mc_report(acc: Welford, pair: PairDescription) -> ChiReport {
    ChiReport { value: acc.mean(), stderr: acc.stderr(), method: ChiMethod::MonteCarlo, n_samples: acc.count(), pair }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::SubspaceFamily;
    use crate::instance::FeasibilityConstants;
    use crate::quad1d::build_pair;

    /// Closed form of `int A^2 / G`: each pair of mixture components gives a
    /// Gaussian integral.
    fn chi_closed_form(mix: &SmoothedMixture) -> f64 {
        let delta = mix.delta();
        let a = 1.0 / delta - 0.5;
        let mut total = 0.0;
        for (ci, pi) in mix.centers().iter().zip(mix.weights()) {
            for (cj, pj) in mix.centers().iter().zip(mix.weights()) {
                let b = (ci + cj) / delta;
                let e = b * b / (4.0 * a) - (ci * ci + cj * cj) / (2.0 * delta);
                total += pi * pj * (2.0 * std::f64::consts::PI).sqrt() / (2.0 * std::f64::consts::PI * delta)
                    * (std::f64::consts::PI / a).sqrt()
                    * e.exp();
            }
        }
        total - 1.0
    }

    fn line_instance(theta: f64, m: usize, delta: Option<f64>) -> (HardInstance, HardInstance) {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let b = DMatrix::from_column_slice(2, 1, &[theta.cos(), theta.sin()]);
        let fam = SubspaceFamily::from_frames(vec![a, b], theta.cos().abs() + 1e-12).unwrap();
        let inst = HardInstance::new(build_pair(m, delta).unwrap(), fam, 0, 0.0, false, FeasibilityConstants::default())
            .unwrap();
        let other = inst.with_planted(1).unwrap();
        (inst, other)
    }

    #[test]
    fn identical_distribution_has_zero_chi() {
        let mix = SmoothedMixture::new(&gauss_hermite_rule(1).unwrap(), 1.0).unwrap();
        assert!(chi_mixture(&mix).unwrap().abs() < 1e-12);
    }

    #[test]
    fn quadrature_matches_closed_form() {
        for m in 1..=CHI_MAX_ORDER {
            let pair = build_pair(m, None).unwrap();
            for side in [Side::A, Side::B] {
                let q = chi_onedim(&pair, side).unwrap();
                let exact = chi_closed_form(pair.mixture(side));
                assert!(q >= 0.0);
                assert!((q - exact).abs() <= 1e-8 * (1.0 + exact), "m={m}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn quadrature_matches_monte_carlo() {
        let pair = build_pair(2, Some(0.25)).unwrap();
        let mix = pair.mixture(Side::A);
        let c = chi_onedim(&pair, Side::A).unwrap();
        let acc = chunked(1_000_000, 17, |rng| {
            let t: f64 = rng.sample(StandardNormal);
            mix.log_ratio(t).exp_m1().powi(2)
        });
        assert!((acc.mean() - c).abs() <= 3.0 * acc.stderr(), "{} vs {c}", acc.mean());
    }

    #[test]
    fn reflection_invariance() {
        let pair = build_pair(3, None).unwrap();
        let mix = pair.mixture(Side::B);
        let centers: Vec<f64> = mix.centers().iter().map(|c| -c).collect();
        assert!(centers.iter().rev().zip(mix.centers()).all(|(a, b)| (a - b).abs() < 1e-14));
        assert!((chi_onedim(&pair, Side::B).unwrap() - chi_closed_form(mix)).abs() < 1e-8);
    }

    #[test]
    fn chi_same_is_factorized_power() {
        let (inst, _) = line_instance(1.0, 3, None);
        let c = chi_onedim(inst.pair(), Side::A).unwrap();
        let r = chi_same(&inst).unwrap();
        assert_eq!(r.value, c);
        assert_eq!(r.stderr, 0.0);
        assert!(chi_onedim(&build_pair(17, None).unwrap(), Side::A).is_err());
    }

    #[test]
    fn orthogonal_frames_are_uncorrelated() {
        let (a, b) = line_instance(std::f64::consts::FRAC_PI_2, 2, None);
        let r = chi_cross(&a, &b, 200_000, 3).unwrap();
        assert!(r.value.abs() <= 3.0 * r.stderr, "{} +- {}", r.value, r.stderr);
    }

    #[test]
    fn same_frame_cross_matches_same() {
        let (a, _) = line_instance(1.0, 2, None);
        let r = chi_cross(&a, &a, 400_000, 4).unwrap();
        let exact = chi_same(&a).unwrap().value;
        assert!((r.value - exact).abs() <= 3.0 * r.stderr, "{} +- {} vs {exact}", r.value, r.stderr);
        assert!(chi_cross(&a, &a, 100, 4).is_err());
    }

    #[test]
    fn coeff_killing_trivial_and_contract() {
        let mix = SmoothedMixture::new(&gauss_hermite_rule(1).unwrap(), 1.0).unwrap();
        let u = DMatrix::identity(2, 1);
        let v = DMatrix::from_column_slice(2, 1, &[0.6, 0.8]);
        let (est, se) = coeff_killing_mc(&mix, 1, &u, &v, &[0], &[0], &[0], 1000, 1).unwrap();
        assert_eq!((est, se), (0.0, 0.0));

        let (a, b) = line_instance(1.0, 2, None);
        assert!(matches!(
            coeff_killing_check(&a, &b, &[0], &[0], &[3], 100, 1),
            Err(Error::Precondition(_))
        ));
        assert!(coeff_killing_check(&a, &b, &[], &[0], &[0], 100, 1).is_err());
    }

    #[test]
    fn coeff_killing_zero_in_the_plane() {
        let (a, b) = line_instance(1.1, 2, None);
        for order in 0..=2 {
            let (est, se) = coeff_killing_check(&a, &b, &[0], &[0], &[order], 200_000, 9).unwrap();
            assert!(est.abs() <= 4.0 * se, "l={order}: {est} +- {se}");
        }
    }

    #[test]
    fn weighted_nodes_stay_bounded() {
        let table = weighted_node_table(16).unwrap();
        assert_eq!(table[0], (1, 1.0));
        assert!(table.iter().all(|&(_, v)| v > 0.0 && v < 1.0 + 1e-12));
    }

    #[test]
    fn moment_killing_by_quadrature() {
        let pair = build_pair(4, None).unwrap();
        for l in 0..=4 {
            assert!(ratio_moment(pair.mixture(Side::A), l).unwrap().abs() <= 1e-6);
        }
    }
}
