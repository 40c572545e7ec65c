//! Classifiers, robust losses and robust empirical risk minimization.
//!
//! The `eps`-robust loss of a classifier `f` at a labeled point `(x, y)` is
//! 1 when some perturbation of `l2` norm at most `eps` makes `f` disagree
//! with `y`. It is computed exactly for set-vote (via the certified margin)
//! and linear classifiers, and only lower-bounded for nearest neighbor.

mod linear;
mod margin;
mod nn;

pub use linear::{attack_linear, fit_linear, LinearClassifier, LinearFit, ATTACK_NUDGE};
pub use margin::{certified_margin_setvote, SetVote, VoteRule};
pub use nn::{nn_distance_diagnostic, nn_distance_statistic, NearestNeighbor};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::instance::LabeledSample;
use crate::rng::derive_seed;
use crate::{Error, Result};

/// Seed stream for the nearest-neighbor attack (point `i` uses
/// `derive_seed(NN_ATTACK_SEED, i)`).
const NN_ATTACK_SEED: u64 = 0x6e6e_6174_7461_636b;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "variant")]
pub enum Classifier {
    SetVote(SetVote),
    Linear(LinearClassifier),
    NearestNeighbor(NearestNeighbor),
}

impl Classifier {
    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        match self {
            Classifier::SetVote(c) => c.predict(x),
            Classifier::Linear(c) => c.predict(x),
            Classifier::NearestNeighbor(c) => c.predict(x),
        }
    }

    pub fn provenance(&self) -> &str {
        match self {
            Classifier::SetVote(c) => c.provenance(),
            Classifier::Linear(c) => c.provenance(),
            Classifier::NearestNeighbor(c) => c.provenance(),
        }
    }

    pub fn loss_method(&self) -> LossMethod {
        match self {
            Classifier::SetVote(_) => LossMethod::Certified,
            Classifier::Linear(_) => LossMethod::ExactAttack,
            Classifier::NearestNeighbor(_) => LossMethod::HeuristicAttack,
        }
    }

    /// `eps`-robust zero-one loss at `(x, label)`; `seed` drives the
    /// randomized nearest-neighbor search only.
    pub fn robust_loss_at(&self, x: &[f64], label: u8, eps: f64, seed: u64) -> Result<bool> {
        if self.predict(x)? != label {
            return Ok(true);
        }
        if eps <= 0.0 {
            return Ok(false);
        }
        match self {
            // closed support intervals: the margin may be attained exactly
            Classifier::SetVote(c) => Ok(c.certified_margin(x)? <= eps),
            Classifier::Linear(c) => {
                let dist = c.distance(x)?;
                // label 1 needs score <= 0, reachable at exactly `dist`;
                // label 0 needs score > 0, only approached at `dist`
                Ok(if label == 1 { dist <= eps } else { dist < eps })
            }
            Classifier::NearestNeighbor(c) => c.find_flip(x, eps, seed),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum LossMethod {
    /// Upper bound from a certificate; exact for set-vote classifiers.
    Certified,
    ExactAttack,
    /// Lower bound from an attack search.
    HeuristicAttack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RobustLossReport {
    pub epsilon: f64,
    pub per_class_loss: [f64; 2],
    pub max_loss: f64,
    pub method: LossMethod,
    pub n: [usize; 2],
}

/// Empirical `eps`-robust loss of `classifier` on each class of `samples`.
pub fn robust_loss(classifier: &Classifier, samples: &[LabeledSample], epsilon: f64) -> Result<RobustLossReport> {
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon = {epsilon} must be >= 0")));
    }
    let flags = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            if s.label > 1 {
                return Err(Error::InvalidArgument(format!("label {} is not 0 or 1", s.label)));
            }
            let lost = classifier.robust_loss_at(&s.point, s.label, epsilon, derive_seed(NN_ATTACK_SEED, i as u64))?;
            Ok((s.label, lost))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut n = [0usize; 2];
    let mut lost = [0usize; 2];
    for (label, l) in flags {
        n[label as usize] += 1;
        lost[label as usize] += usize::from(l);
    }
    let rate = |c: usize| if n[c] == 0 { 0.0 } else { lost[c] as f64 / n[c] as f64 };
    let per_class_loss = [rate(0), rate(1)];
    Ok(RobustLossReport {
        epsilon,
        per_class_loss,
        max_loss: per_class_loss[0].max(per_class_loss[1]),
        method: classifier.loss_method(),
        n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErmOutcome {
    pub chosen: usize,
    pub losses: Vec<RobustLossReport>,
}

/// Robust ERM over a finite family: the member with the smallest empirical
/// max-over-classes robust loss, ties to the lowest index.
pub fn erm_robust(
    family: &[Classifier],
    samples0: &[LabeledSample],
    samples1: &[LabeledSample],
    epsilon: f64,
) -> Result<ErmOutcome> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("classifier family is empty".into()));
    }
    let samples: Vec<LabeledSample> = samples0.iter().chain(samples1).cloned().collect();
    let losses = family
        .iter()
        .map(|c| robust_loss(c, &samples, epsilon))
        .collect::<Result<Vec<_>>>()?;
    let mut chosen = 0;
    for (i, r) in losses.iter().enumerate() {
        if r.max_loss < losses[chosen].max_loss {
            chosen = i;
        }
    }
    Ok(ErmOutcome { chosen, losses })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(points: &[f64], label: u8) -> Vec<LabeledSample> {
        points.iter().map(|&p| LabeledSample { point: vec![p], label }).collect()
    }

    #[test]
    fn linear_loss_at_and_beyond_half_gap() {
        let rho = 0.1;
        let c = Classifier::Linear(LinearClassifier::new(vec![1.0], -rho / 2.0, "axis".into()).unwrap());
        let mut s = labeled(&[0.0; 5], 0);
        s.extend(labeled(&[rho; 5], 1));
        let clean = robust_loss(&c, &s, 0.0).unwrap();
        assert_eq!(clean.per_class_loss, [0.0, 0.0]);
        let r = robust_loss(&c, &s, rho).unwrap();
        assert_eq!(r.per_class_loss, [1.0, 1.0]);
        assert_eq!(r.method, LossMethod::ExactAttack);
        let r = robust_loss(&c, &s, 0.04).unwrap();
        assert_eq!(r.max_loss, 0.0);
    }

    #[test]
    fn erm_single_member_and_ties() {
        let a = Classifier::Linear(LinearClassifier::new(vec![1.0], 0.0, "a".into()).unwrap());
        let s0 = labeled(&[-1.0], 0);
        let s1 = labeled(&[1.0], 1);
        assert_eq!(erm_robust(std::slice::from_ref(&a), &s0, &s1, 0.5).unwrap().chosen, 0);
        let fam = vec![a.clone(), a];
        assert_eq!(erm_robust(&fam, &s0, &s1, 0.5).unwrap().chosen, 0);
        assert!(erm_robust(&[], &s0, &s1, 0.5).is_err());
    }

    #[test]
    fn negative_epsilon_rejected() {
        let a = Classifier::Linear(LinearClassifier::new(vec![1.0], 0.0, "a".into()).unwrap());
        assert!(robust_loss(&a, &labeled(&[1.0], 1), -0.1).is_err());
    }
}
