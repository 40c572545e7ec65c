//! Near-orthogonal subspace families and the orthonormal Walsh–Hadamard
//! transform.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::rng::rng_from_seed;
use crate::{Error, Result};

/// Tolerance on `|F^T F - I|_max` for a frame to count as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// A list of `d x k` column-orthonormal frames whose pairwise overlaps
/// (largest singular value of `F_i^T F_j`) are certified to be at most
/// `eps_orth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SubspaceFamily {
    ambient_dim: usize,
    subspace_dim: usize,
    eps_orth: f64,
    #[serde(with = "crate::serde_matrix::vec")]
    frames: Vec<DMatrix<f64>>,
    seed: Option<u64>,
    rejections: usize,
}

impl SubspaceFamily {
    /// Wraps explicitly constructed frames, checking orthonormality and the
    /// pairwise bound.
    pub fn from_frames(frames: Vec<DMatrix<f64>>, eps_orth: f64) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidArgument("a family needs at least one frame".into()))?;
        let (d, k) = first.shape();
        for f in &frames {
            if f.shape() != (d, k) {
                return Err(Error::DimensionMismatch { expected: d * k, found: f.len() });
            }
            check_orthonormal(f)?;
        }
        let bound = pairwise_orthogonality(&frames);
        if bound > eps_orth + ORTHONORMAL_TOL {
            return Err(Error::Precondition(format!(
                "frames overlap up to {bound}, above the requested {eps_orth}"
            )));
        }
        Ok(Self { ambient_dim: d, subspace_dim: k, eps_orth, frames, seed: None, rejections: 0 })
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn subspace_dim(&self) -> usize {
        self.subspace_dim
    }

    pub fn eps_orth(&self) -> f64 {
        self.eps_orth
    }

    pub fn frames(&self) -> &[DMatrix<f64>] {
        &self.frames
    }

    pub fn frame(&self, i: usize) -> &DMatrix<f64> {
        &self.frames[i]
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Number of candidate frames discarded while sampling.
    pub fn rejections(&self) -> usize {
        self.rejections
    }
}

/// Samples `count` random `k`-dimensional subspaces of `R^d` with pairwise
/// overlap at most `eps_orth`.
///
/// Each candidate frame is the sign-normalized QR factor of a Gaussian
/// `d x k` matrix. A candidate that overlaps an accepted frame by more than
/// `eps_orth` is discarded and redrawn; after `max_retries` discards in total
/// the call fails with the best bound any candidate achieved.
pub fn sample_family(
    d: usize,
    k: usize,
    count: usize,
    eps_orth: f64,
    seed: u64,
    max_retries: usize,
) -> Result<SubspaceFamily> {
    if k == 0 || k > d {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= d, got k = {k}, d = {d}")));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    if !(eps_orth > 0.0 && eps_orth < 1.0) {
        return Err(Error::InvalidArgument(format!("eps_orth = {eps_orth} outside (0, 1)")));
    }
    let mut rng = rng_from_seed(seed);
    let mut frames: Vec<DMatrix<f64>> = Vec::with_capacity(count);
    let mut rejections = 0;
    let mut best_bound = f64::INFINITY;
    while frames.len() < count {
        let candidate = random_frame(d, k, &mut rng);
        let worst = frames
            .iter()
            .map(|f| frame_overlap(f, &candidate))
            .fold(0.0, f64::max);
        if worst <= eps_orth {
            frames.push(candidate);
            continue;
        }
        best_bound = best_bound.min(worst);
        rejections += 1;
        if rejections > max_retries {
            return Err(Error::FamilyInfeasible {
                count,
                accepted: frames.len(),
                retries: max_retries,
                best_bound,
                eps_orth,
            });
        }
    }
    Ok(SubspaceFamily {
        ambient_dim: d,
        subspace_dim: k,
        eps_orth,
        frames,
        seed: Some(seed),
        rejections,
    })
}

/// Uniformly random `d x k` orthonormal frame.
pub fn random_frame<R: Rng + ?Sized>(d: usize, k: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    orthonormalize(g)
}

/// Thin QR factor `Q` with signs chosen so that `diag(R) > 0`, which makes
/// the map from Gaussian matrices to frames Haar-distributed.
pub fn orthonormalize(g: DMatrix<f64>) -> DMatrix<f64> {
    let k = g.ncols();
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// `max |F^T F - I|`.
pub fn orthonormality_defect(frame: &DMatrix<f64>) -> f64 {
    let gram = frame.transpose() * frame;
    let k = gram.nrows();
    (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| (gram[(i, j)] - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

pub fn check_orthonormal(frame: &DMatrix<f64>) -> Result<()> {
    let defect = orthonormality_defect(frame);
    if defect > ORTHONORMAL_TOL {
        return Err(Error::NotOrthonormal(defect));
    }
    Ok(())
}

/// Largest singular value of `a^T b`, i.e. `max_{u in span a, |u| = 1}
/// |proj_{span b} u|`.
pub fn frame_overlap(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let m = a.transpose() * b;
    if m.is_empty() {
        return 0.0;
    }
    if m.len() == 1 {
        return m[(0, 0)].abs();
    }
    m.singular_values().max()
}

/// Maximum of [`frame_overlap`] over distinct pairs; zero for a single frame.
pub fn pairwise_orthogonality(frames: &[DMatrix<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..frames.len() {
        for j in i + 1..frames.len() {
            worst = worst.max(frame_overlap(&frames[i], &frames[j]));
        }
    }
    worst
}

/// Completes a `d x k` orthonormal frame to a `d x d` orthogonal matrix whose
/// first `k` columns are the frame.
///
/// Standard basis vectors are added in order of smallest component inside the
/// current span, each orthogonalized twice against all previous columns.
pub fn extend_to_full_basis(frame: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_orthonormal(frame)?;
    let (d, k) = frame.shape();
    let mut q = DMatrix::<f64>::zeros(d, d);
    q.columns_mut(0, k).copy_from(frame);
    let mut used = vec![false; d];
    let mut norms: Vec<f64> = (0..d).map(|i| frame.row(i).norm_squared()).collect();
    for col in k..d {
        let pick = (0..d)
            .filter(|&i| !used[i])
            .min_by(|&a, &b| norms[a].total_cmp(&norms[b]))
            .expect("a free basis vector remains while columns are missing");
        used[pick] = true;
        let mut v = nalgebra::DVector::<f64>::zeros(d);
        v[pick] = 1.0;
        for _ in 0..2 {
            for j in 0..col {
                let c = q.column(j).dot(&v);
                v.axpy(-c, &q.column(j), 1.0);
            }
        }
        let n = v.norm();
        if n < 1e-8 {
            return Err(Error::Invariant("basis completion lost rank".into()));
        }
        v /= n;
        for i in 0..d {
            norms[i] += v[i] * v[i];
        }
        q.set_column(col, &v);
    }
    Ok(q)
}

pub fn is_power_of_two(n: usize) -> bool {
    n != 0 && n & (n - 1) == 0
}

/// In-place orthonormal fast Walsh–Hadamard transform (Sylvester ordering,
/// scaled by `1/sqrt(n)` so it is an isometry and an involution).
pub fn fwht_in_place(x: &mut [f64]) -> Result<()> {
    let n = x.len();
    if !is_power_of_two(n) {
        return Err(Error::NotPowerOfTwo(n));
    }
    let mut h = 1;
    while h < n {
        for block in x.chunks_exact_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (s, t) = (*a + *b, *a - *b);
                *a = s;
                *b = t;
            }
        }
        h *= 2;
    }
    let scale = 1.0 / (n as f64).sqrt();
    x.iter_mut().for_each(|v| *v *= scale);
    Ok(())
}

pub fn walsh_hadamard(x: &[f64]) -> Result<Vec<f64>> {
    let mut y = x.to_vec();
    fwht_in_place(&mut y)?;
    Ok(y)
}

/// Dense orthonormal Sylvester–Hadamard matrix of order `n`.
pub fn hadamard_matrix(n: usize) -> Result<DMatrix<f64>> {
    if !is_power_of_two(n) {
        return Err(Error::NotPowerOfTwo(n));
    }
    let s = 1.0 / (n as f64).sqrt();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if (i & j).count_ones() % 2 == 0 {
            s
        } else {
            -s
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn unit(d: usize, i: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d, 1, |r, _| if r == i { 1.0 } else { 0.0 })
    }

    #[test]
    fn axes_are_orthogonal() {
        let fam = SubspaceFamily::from_frames(vec![unit(4, 0), unit(4, 1)], 0.01).unwrap();
        assert_eq!(pairwise_orthogonality(fam.frames()), 0.0);
    }

    #[test]
    fn planar_lines_overlap_by_cosine() {
        let t = std::f64::consts::FRAC_PI_3;
        let a = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let b = DMatrix::from_column_slice(2, 1, &[t.cos(), t.sin()]);
        assert!((frame_overlap(&a, &b) - 0.5).abs() < 1e-15);
        assert!((frame_overlap(&a, &a) - 1.0).abs() < 1e-15);
        assert!(SubspaceFamily::from_frames(vec![a, b], 0.4).is_err());
    }

    #[test]
    fn identical_multi_dim_frames_overlap_one() {
        let mut rng = crate::rng::StdRng::seed_from_u64(3);
        let f = random_frame(8, 3, &mut rng);
        assert!((frame_overlap(&f, &f) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn family_regression() {
        let fam = sample_family(64, 4, 16, 0.5, 1, 1000).unwrap();
        assert_eq!(fam.len(), 16);
        assert_eq!(fam.rejections(), 13);
        assert!(pairwise_orthogonality(fam.frames()) <= 0.5);
        for f in fam.frames() {
            assert!(orthonormality_defect(f) <= ORTHONORMAL_TOL);
        }
        assert_eq!(fam, sample_family(64, 4, 16, 0.5, 1, 1000).unwrap());
    }

    #[test]
    fn projections_of_random_units_respect_bound() {
        let fam = sample_family(32, 3, 6, 0.7, 5, 10_000).unwrap();
        let mut rng = crate::rng::StdRng::seed_from_u64(11);
        for i in 0..fam.len() {
            for j in 0..fam.len() {
                if i == j {
                    continue;
                }
                for _ in 0..100 {
                    let c = nalgebra::DVector::from_fn(3, |_, _| rng.sample::<f64, _>(StandardNormal)).normalize();
                    let u = fam.frame(i) * c;
                    let proj = (fam.frame(j).transpose() * &u).norm();
                    assert!(proj <= fam.eps_orth() + 1e-10);
                }
            }
        }
    }

    #[test]
    fn infeasible_family_reports_best_bound() {
        match sample_family(4, 2, 10, 0.05, 2, 50) {
            Err(Error::FamilyInfeasible { best_bound, accepted, .. }) => {
                assert!(best_bound > 0.05 && best_bound <= 1.0 + 1e-12);
                assert!(accepted >= 1);
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
        assert!(sample_family(4, 5, 1, 0.5, 0, 1).is_err());
        assert!(sample_family(4, 1, 1, 1.0, 0, 1).is_err());
    }

    #[test]
    fn identity_frame_completes_to_identity() {
        let f = DMatrix::<f64>::identity(6, 2);
        let q = extend_to_full_basis(&f).unwrap();
        assert_eq!(q, DMatrix::<f64>::identity(6, 6));
    }

    #[test]
    fn completion_is_orthogonal() {
        let mut rng = crate::rng::StdRng::seed_from_u64(8);
        let f = random_frame(8, 3, &mut rng);
        let q = extend_to_full_basis(&f).unwrap();
        assert_eq!(q.columns(0, 3), f.columns(0, 3));
        assert!(orthonormality_defect(&q) <= 1e-10);
        let cross = f.transpose() * q.columns(3, 5);
        assert!(cross.amax() <= 1e-10);
        assert!((q.determinant().abs() - 1.0).abs() <= 1e-8);
    }

    #[test]
    fn completion_rejects_non_orthonormal() {
        let f = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        assert!(matches!(extend_to_full_basis(&f), Err(Error::NotOrthonormal(_))));
    }

    #[test]
    fn hadamard_small_cases() {
        let y = walsh_hadamard(&[1.0, 0.0]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((y[0] - s).abs() < 1e-15 && (y[1] - s).abs() < 1e-15);
        assert_eq!(walsh_hadamard(&[1.0; 4]).unwrap(), vec![2.0, 0.0, 0.0, 0.0]);
        assert_eq!(walsh_hadamard(&[1.0; 3]), Err(Error::NotPowerOfTwo(3)));
    }

    #[test]
    fn hadamard_matches_dense_matrix() {
        let mut rng = crate::rng::StdRng::seed_from_u64(4);
        let x: Vec<f64> = (0..8).map(|_| rng.sample(StandardNormal)).collect();
        let fast = walsh_hadamard(&x).unwrap();
        let dense = hadamard_matrix(8).unwrap() * nalgebra::DVector::from_vec(x);
        for (a, b) in fast.iter().zip(dense.iter()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn hadamard_is_isometric_involution(p in 0u32..7, seed in any::<u64>()) {
            let n = 1usize << p;
            let mut rng = crate::rng::StdRng::seed_from_u64(seed);
            let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let y = walsh_hadamard(&x).unwrap();
            let z = walsh_hadamard(&y).unwrap();
            let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((nx - ny).abs() <= 1e-10 * (1.0 + nx));
            for (a, b) in x.iter().zip(&z) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
            let linf = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(linf >= nx / (n as f64).sqrt() - 1e-12);
        }
    }
}
