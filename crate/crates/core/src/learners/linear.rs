//! Linear classifiers: perceptron training and exact minimal attacks.

use serde::{Deserialize, Serialize};

use crate::instance::dot;
use crate::{Error, Result};

/// Predicts 1 iff `<w, x> + b > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LinearClassifier {
    weights: Vec<f64>,
    bias: f64,
    provenance: String,
}

impl LinearClassifier {
    pub fn new(weights: Vec<f64>, bias: f64, provenance: String) -> Result<Self> {
        let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite() && bias.is_finite()) {
            return Err(Error::InvalidArgument("linear classifier needs finite nonzero weights".into()));
        }
        Ok(Self { weights, bias, provenance })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn weight_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.weights.len() {
            return Err(Error::DimensionMismatch { expected: self.weights.len(), found: x.len() });
        }
        Ok(())
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(dot(&self.weights, x) + self.bias)
    }

    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.score(x)? > 0.0))
    }

    /// Distance from `x` to the decision hyperplane.
    pub fn distance(&self, x: &[f64]) -> Result<f64> {
        Ok(self.score(x)?.abs() / self.weight_norm())
    }
}

/// Outcome of [`fit_linear`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LinearFit {
    pub classifier: LinearClassifier,
    /// Whether a separating hyperplane for the training data was found.
    pub separable: bool,
    pub training_error: f64,
    pub epochs: usize,
    pub updates: usize,
}

/// Averaged perceptron on standardized features, refined toward the
/// maximum-margin separator.
///
/// Features are centered and scaled by their pooled standard deviation, so
/// a coordinate that separates the classes by a small absolute gap is not
/// drowned out by unit-variance noise coordinates. Training stops at the
/// first epoch without mistakes (the data are then separated); otherwise the
/// best of the current and averaged weights seen so far is kept after
/// `max_iters` epochs. A soft-margin SVM fit then replaces it unless it makes
/// more training mistakes.
pub fn fit_linear(samples0: &[Vec<f64>], samples1: &[Vec<f64>], max_iters: usize) -> Result<LinearFit> {
    if samples0.is_empty() || samples1.is_empty() {
        return Err(Error::InvalidArgument("both classes need at least one sample".into()));
    }
    let dim = samples0[0].len();
    let data: Vec<(&[f64], f64)> = samples0
        .iter()
        .map(|x| (x.as_slice(), -1.0))
        .chain(samples1.iter().map(|x| (x.as_slice(), 1.0)))
        .collect();
    if let Some((x, _)) = data.iter().find(|(x, _)| x.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, found: x.len() });
    }
    let n = data.len() as f64;
    let mean: Vec<f64> = (0..dim).map(|j| data.iter().map(|(x, _)| x[j]).sum::<f64>() / n).collect();
    let scale: Vec<f64> = (0..dim)
        .map(|j| {
            let var = data.iter().map(|(x, _)| (x[j] - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                1.0 / var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let z: Vec<(Vec<f64>, f64)> = data
        .iter()
        .map(|(x, y)| ((0..dim).map(|j| (x[j] - mean[j]) * scale[j]).collect(), *y))
        .collect();

    let errors = |w: &[f64], b: f64| z.iter().filter(|(x, y)| y * (dot(w, x) + b) <= 0.0).count();
    let (mut w, mut b) = (vec![0.0; dim], 0.0);
    let (mut w_sum, mut b_sum, mut steps) = (vec![0.0; dim], 0.0, 0.0);
    let mut best = (usize::MAX, w.clone(), b);
    let mut updates = 0;
    let mut separable = false;
    let mut epochs = 0;
    for _ in 0..max_iters.max(1) {
        epochs += 1;
        let mut mistakes = 0;
        for (x, y) in &z {
            if y * (dot(&w, x) + b) <= 0.0 {
                w.iter_mut().zip(x).for_each(|(wi, xi)| *wi += y * xi);
                b += y;
                mistakes += 1;
                updates += 1;
            }
            w_sum.iter_mut().zip(&w).for_each(|(s, wi)| *s += wi);
            b_sum += b;
            steps += 1.0;
        }
        let avg: Vec<f64> = w_sum.iter().map(|s| s / steps).collect();
        let avg_b = b_sum / steps;
        for (cand, cb) in [(&avg, avg_b), (&w, b)] {
            let e = errors(cand, cb);
            if e < best.0 && cand.iter().any(|&v| v != 0.0) {
                best = (e, cand.clone(), cb);
            }
        }
        if mistakes == 0 {
            separable = true;
            break;
        }
    }
    let (err, ws, bs) = best;
    if err == usize::MAX {
        return Err(Error::Invariant("perceptron produced no nonzero weights".into()));
    }
    let (svm_w, svm_b) = max_margin(&z, SVM_COST, SVM_EPOCHS);
    let (ws, bs, provenance) = if svm_w.iter().any(|&v| v != 0.0) && errors(&svm_w, svm_b) <= err {
        (svm_w, svm_b, "averaged perceptron, max-margin refined")
    } else {
        (ws, bs, "averaged perceptron")
    };
    // map back to the original coordinates
    let weights: Vec<f64> = ws.iter().zip(&scale).map(|(w, s)| w * s).collect();
    let bias = bs - weights.iter().zip(&mean).map(|(w, m)| w * m).sum::<f64>();
    let classifier = LinearClassifier::new(weights, bias, provenance.into())?;
    let training_error = data
        .iter()
        .filter(|(x, y)| (classifier.predict(x).unwrap() == 1) != (*y > 0.0))
        .count() as f64
        / n;
    Ok(LinearFit { classifier, separable: separable || training_error == 0.0, training_error, epochs, updates })
}

const SVM_COST: f64 = 1e3;
const SVM_EPOCHS: usize = 2000;
const SVM_TOL: f64 = 1e-4;

/// Soft-margin linear SVM by dual coordinate descent, the bias carried as a
/// constant feature. A large `cost` approaches the hard-margin separator.
fn max_margin(z: &[(Vec<f64>, f64)], cost: f64, epochs: usize) -> (Vec<f64>, f64) {
    let dim = z.first().map_or(0, |(x, _)| x.len());
    let (mut w, mut b) = (vec![0.0; dim], 0.0);
    let mut alpha = vec![0.0; z.len()];
    let q: Vec<f64> = z.iter().map(|(x, _)| dot(x, x) + 1.0).collect();
    for _ in 0..epochs {
        let mut worst: f64 = 0.0;
        for (i, (x, y)) in z.iter().enumerate() {
            let g = y * (dot(&w, x) + b) - 1.0;
            let pg = if alpha[i] == 0.0 {
                g.min(0.0)
            } else if alpha[i] == cost {
                g.max(0.0)
            } else {
                g
            };
            worst = worst.max(pg.abs());
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, cost);
                let step = (alpha[i] - old) * y;
                w.iter_mut().zip(x).for_each(|(wi, xi)| *wi += step * xi);
                b += step;
            }
        }
        if worst < SVM_TOL {
            break;
        }
    }
    (w, b)
}

/// Relative overshoot applied to the minimal flipping perturbation.
pub const ATTACK_NUDGE: f64 = 1e-9;

/// Minimal-norm perturbation `z` with `predict(x + z) != predict(x)`.
///
/// The exact minimizer is the projection onto the hyperplane,
/// `-s w / |w|^2` with `s` the score; it is lengthened by a relative
/// [`ATTACK_NUDGE`] (or an absolute `1e-12` step for points on the boundary)
/// so that the label actually changes in floating point.
pub fn attack_linear(classifier: &LinearClassifier, x: &[f64]) -> Result<(Vec<f64>, f64)> {
    let s = classifier.score(x)?;
    let before = classifier.predict(x)?;
    let w = classifier.weights();
    let wn2 = w.iter().map(|v| v * v).sum::<f64>();
    let wn = wn2.sqrt();
    let mut z: Vec<f64> = if s != 0.0 {
        w.iter().map(|wi| -s * wi / wn2 * (1.0 + ATTACK_NUDGE)).collect()
    } else {
        w.iter().map(|wi| 1e-12 * wi / wn).collect()
    };
    for _ in 0..200 {
        let moved: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a + b).collect();
        if classifier.predict(&moved)? != before {
            let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            return Ok((z, norm));
        }
        // rounding kept the label: push a little further along the normal
        let extra = 1e-12 * (1.0 + s.abs() / wn);
        let dir = if before == 1 { -1.0 } else { 1.0 };
        z.iter_mut().zip(w).for_each(|(zi, wi)| *zi += dir * extra * wi / wn);
    }
    Err(Error::Invariant("linear attack failed to cross the boundary".into()))
}
