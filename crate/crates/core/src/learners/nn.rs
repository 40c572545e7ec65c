//! One-nearest-neighbor classifier, a heuristic attack on it, and the
//! nearest-neighbor distance diagnostic.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::instance::HardInstance;
use crate::rng::{derive_seed, rng_from_seed};
use crate::stats::ks_two_sample;
use crate::{Error, Result};

/// Random directions tried per point by [`NearestNeighbor::find_flip`].
const RANDOM_DIRECTIONS: usize = 32;
/// Opposite-class training points tried as attack targets.
const TARGETS: usize = 5;

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NearestNeighbor {
    points: Vec<Vec<f64>>,
    labels: Vec<u8>,
    provenance: String,
}

impl NearestNeighbor {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<u8>, provenance: String) -> Result<Self> {
        if points.is_empty() || points.len() != labels.len() {
            return Err(Error::InvalidArgument("training set must be non-empty with one label per point".into()));
        }
        let dim = points[0].len();
        if let Some(p) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
        }
        Ok(Self { points, labels, provenance })
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Label of the closest training point; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        if x.len() != self.points[0].len() {
            return Err(Error::DimensionMismatch { expected: self.points[0].len(), found: x.len() });
        }
        let mut best = (f64::INFINITY, 0);
        for (i, p) in self.points.iter().enumerate() {
            let d = dist2(p, x);
            if d < best.0 {
                best = (d, i);
            }
        }
        Ok(self.labels[best.1])
    }

    /// Searches for a perturbation of norm at most `eps` that changes the
    /// prediction: steps toward the nearest opposite-label training points,
    /// random directions, then single-coordinate moves. A `true` result is a
    /// witness; `false` proves nothing.
    pub fn find_flip(&self, x: &[f64], eps: f64, seed: u64) -> Result<bool> {
        let label = self.predict(x)?;
        if eps <= 0.0 {
            return Ok(false);
        }
        let flips = |z: &[f64]| -> Result<bool> {
            let moved: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
            Ok(self.predict(&moved)? != label)
        };
        let scaled = |dir: Vec<f64>| -> Vec<f64> {
            let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            dir.into_iter().map(|v| v * eps / n).collect()
        };

        let mut targets: Vec<(f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .filter(|(i, _)| self.labels[*i] != label)
            .map(|(i, p)| (dist2(p, x), i))
            .collect();
        targets.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(d2, i) in targets.iter().take(TARGETS) {
            if d2 == 0.0 {
                continue;
            }
            let dir: Vec<f64> = self.points[i].iter().zip(x).map(|(p, a)| p - a).collect();
            let reach = eps.min(d2.sqrt());
            let z: Vec<f64> = scaled(dir).into_iter().map(|v| v * reach / eps).collect();
            if flips(&z)? {
                return Ok(true);
            }
        }
        let mut rng = rng_from_seed(seed);
        for _ in 0..RANDOM_DIRECTIONS {
            let dir: Vec<f64> = (0..x.len()).map(|_| rng.sample(StandardNormal)).collect();
            if flips(&scaled(dir))? {
                return Ok(true);
            }
        }
        for j in 0..x.len() {
            for s in [eps, -eps] {
                let mut z = vec![0.0; x.len()];
                z[j] = s;
                if flips(&z)? {
                    return Ok(true);
                }
            }
        }
        Ok(false)
    }
}

/// KS distance between the distances from class-0 test points to their
/// nearest class-0 and nearest class-1 training points.
pub fn nn_distance_statistic(train0: &[Vec<f64>], train1: &[Vec<f64>], test0: &[Vec<f64>]) -> Result<f64> {
    if train0.is_empty() || train1.is_empty() || test0.is_empty() {
        return Err(Error::InvalidArgument("point sets must be non-empty".into()));
    }
    let nearest = |set: &[Vec<f64>], x: &[f64]| set.iter().map(|p| dist2(p, x)).fold(f64::INFINITY, f64::min).sqrt();
    let (same, other): (Vec<f64>, Vec<f64>) =
        test0.par_iter().map(|x| (nearest(train0, x), nearest(train1, x))).unzip();
    Ok(ks_two_sample(&same, &other))
}

/// [`nn_distance_statistic`] on fresh samples of an instance.
pub fn nn_distance_diagnostic(instance: &HardInstance, n_train: usize, n_test: usize, seed: u64) -> Result<f64> {
    if n_train < 10 || n_test < 10 {
        return Err(Error::InvalidArgument("need at least 10 training and test points".into()));
    }
    let pts = |label: u8, n: usize, s: u64| -> Result<Vec<Vec<f64>>> {
        Ok(instance.sample(label, n, s)?.into_iter().map(|s| s.point).collect())
    };
    let train0 = pts(0, n_train, derive_seed(seed, 0))?;
    let train1 = pts(1, n_train, derive_seed(seed, 1))?;
    let test0 = pts(0, n_test, derive_seed(seed, 2))?;
    nn_distance_statistic(&train0, &train1, &test0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separated_point_masses() {
        let a = vec![vec![0.0, 0.0]; 20];
        let b = vec![vec![100.0, 0.0]; 20];
        let t = vec![vec![0.0, 0.0]; 20];
        assert_eq!(nn_distance_statistic(&a, &b, &t).unwrap(), 1.0);
    }

    #[test]
    fn identical_gaussians_are_close() {
        let mut rng = rng_from_seed(5);
        let mut draw = |n: usize| -> Vec<Vec<f64>> {
            (0..n).map(|_| (0..4).map(|_| rng.sample(StandardNormal)).collect()).collect()
        };
        let (a, b, t) = (draw(300), draw(300), draw(300));
        let s = nn_distance_statistic(&a, &b, &t).unwrap();
        assert!(s < 1.63 * (2.0 / 300.0f64).sqrt(), "{s}");
    }

    #[test]
    fn flip_search_finds_obvious_flip() {
        let nn = NearestNeighbor::new(vec![vec![0.0], vec![1.0]], vec![0, 1], "toy".into()).unwrap();
        assert_eq!(nn.predict(&[0.4]).unwrap(), 0);
        assert!(nn.find_flip(&[0.4], 0.2, 1).unwrap());
        assert!(!nn.find_flip(&[0.4], 0.05, 1).unwrap());
        assert!(!nn.find_flip(&[0.4], 0.0, 1).unwrap());
    }
}
