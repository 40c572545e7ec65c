//! Distances between empirical distributions and robust covering numbers.
//!
//! A two-distance neighborhood of `x` with budgets `(eps, delta)` holds every
//! `y` reachable by first moving at most `delta` of the mass of `x` anywhere
//! (a total-variation move) and then transporting the result to `y` with no
//! point travelling farther than `eps` (a `W_inf` move).

mod generative;
mod matching;

pub use generative::{
    enumerate_weight_grid, grid_axis, lipschitz_bound_check, net_forward, weight_grid_cover_size, Activation,
    GenerativeNet, LipschitzCheck,
};
pub use matching::{matching_size_within, max_matching, w_inf, w_inf_brute_force, Norm, MAX_POINTS};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Finitely supported probability distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    atoms: Vec<(Vec<f64>, f64)>,
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<(Vec<f64>, f64)>) -> Result<Self> {
        if atoms.iter().any(|(_, p)| !(*p >= 0.0)) {
            return Err(Error::InvalidArgument("probabilities must be non-negative".into()));
        }
        let total: f64 = atoms.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { atoms })
    }

    /// Uniform empirical measure on `points` (repeats add mass).
    pub fn empirical(points: &[Vec<f64>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("empirical measure needs at least one point".into()));
        }
        let w = 1.0 / points.len() as f64;
        Self::new(points.iter().map(|p| (p.clone(), w)).collect())
    }

    pub fn atoms(&self) -> &[(Vec<f64>, f64)] {
        &self.atoms
    }
}

/// Total variation `1/2 sum |p - q|` over the union of the atoms.
pub fn tv_distance(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    let mut support: Vec<(&[f64], f64)> = Vec::new();
    for (x, w) in &p.atoms {
        match support.iter_mut().find(|(y, _)| *y == x.as_slice()) {
            Some(slot) => slot.1 += w,
            None => support.push((x, *w)),
        }
    }
    for (x, w) in &q.atoms {
        match support.iter_mut().find(|(y, _)| *y == x.as_slice()) {
            Some(slot) => slot.1 -= w,
            None => support.push((x, -*w)),
        }
    }
    (0.5 * support.iter().map(|(_, d)| d.abs()).sum::<f64>()).min(1.0)
}

/// Two-distance neighborhood of a uniform empirical measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TwoDistanceNeighborhood {
    pub center: Vec<Vec<f64>>,
    pub eps: f64,
    pub delta: f64,
    #[serde(default)]
    pub norm: Norm,
}

/// Whether the uniform empirical `candidate` lies in `nbhd`.
///
/// With `n` points on each side, a TV move of size `delta` may relocate
/// `floor(delta n)` center points onto unmatched candidate points, so
/// membership holds iff a matching of at least `n - floor(delta n)` pairs
/// within distance `eps` exists.
pub fn in_neighborhood(candidate: &[Vec<f64>], nbhd: &TwoDistanceNeighborhood) -> Result<bool> {
    let n = nbhd.center.len();
    if candidate.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: candidate.len() });
    }
    if !(nbhd.eps >= 0.0 && nbhd.delta >= 0.0) {
        return Err(Error::InvalidArgument("neighborhood budgets must be non-negative".into()));
    }
    let movable = ((nbhd.delta * n as f64) + 1e-9).floor() as usize;
    let need = n.saturating_sub(movable);
    if need == 0 {
        return Ok(true);
    }
    Ok(matching_size_within(&nbhd.center, candidate, nbhd.eps, nbhd.norm) >= need)
}

/// A pair of empirical measures, one per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionPair {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
}

/// `covers[i][j]` is true when member `j` lies in the neighborhood of member
/// `i` in both coordinates.
pub fn coverage_matrix(family: &[DistributionPair], eps: f64, delta: f64, norm: Norm) -> Result<Vec<Vec<bool>>> {
    family
        .iter()
        .map(|center| {
            let a = TwoDistanceNeighborhood { center: center.first.clone(), eps, delta, norm };
            let b = TwoDistanceNeighborhood { center: center.second.clone(), eps, delta, norm };
            family
                .iter()
                .map(|m| Ok(in_neighborhood(&m.first, &a)? && in_neighborhood(&m.second, &b)?))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cover {
    pub indices: Vec<usize>,
    pub size: usize,
}

/// Greedy set cover: repeatedly take the member covering the most uncovered
/// members (ties to the lowest index). At most a `ln n` factor above optimal.
pub fn greedy_cover(family: &[DistributionPair], eps: f64, delta: f64, norm: Norm) -> Result<Cover> {
    Ok(greedy_from_matrix(&coverage_matrix(family, eps, delta, norm)?))
}

pub fn greedy_from_matrix(covers: &[Vec<bool>]) -> Cover {
    let n = covers.len();
    let mut covered = vec![false; n];
    let mut indices = Vec::new();
    while covered.iter().any(|c| !c) {
        let gain = |i: usize| (0..n).filter(|&j| covers[i][j] && !covered[j]).count();
        let best = (0..n).fold(0, |b, i| if gain(i) > gain(b) { i } else { b });
        if gain(best) == 0 {
            // a member that is not in its own neighborhood cannot happen
            // with non-negative budgets; guard against looping anyway
            let j = covered.iter().position(|c| !c).unwrap();
            covered[j] = true;
            indices.push(j);
            continue;
        }
        for j in 0..n {
            covered[j] |= covers[best][j];
        }
        indices.push(best);
    }
    Cover { size: indices.len(), indices }
}

/// Minimum cover by exhaustive search over subsets in order of size.
pub fn exact_cover_size(covers: &[Vec<bool>]) -> Result<usize> {
    let n = covers.len();
    if n > 20 {
        return Err(Error::InvalidArgument("exact cover limited to 20 members".into()));
    }
    let masks: Vec<u32> = covers
        .iter()
        .map(|row| row.iter().enumerate().fold(0u32, |m, (j, &c)| if c { m | 1 << j } else { m }))
        .collect();
    let full = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    let mut best = n;
    for subset in 0u32..(1 << n) {
        let size = subset.count_ones() as usize;
        if size >= best {
            continue;
        }
        let union = (0..n).filter(|&i| subset >> i & 1 == 1).fold(0u32, |m, i| m | masks[i]);
        if union == full {
            best = size;
        }
    }
    Ok(best)
}
