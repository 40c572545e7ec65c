//! Set-vote classifiers and their exact certified `l2` margin.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::instance::{project, InputLayout};
use crate::quad1d::SupportSets;
use crate::Result;

/// How per-coordinate set memberships are turned into a label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "rule", content = "fraction")]
pub enum VoteRule {
    /// Label 0 iff at least as many coordinates lie in `S_A` as in `S_B`.
    Majority,
    /// Label 0 iff the fraction of coordinates in `S_A` is at least the
    /// given value.
    AThreshold(f64),
}

impl VoteRule {
    pub fn decide(&self, in_a: usize, in_b: usize, k: usize) -> u8 {
        let zero = match *self {
            VoteRule::Majority => in_a >= in_b,
            VoteRule::AThreshold(f) => in_a as f64 >= f * k as f64 - 1e-12,
        };
        u8::from(!zero)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    A,
    B,
    Neither,
}

/// Classifier that projects onto an orthonormal frame and votes on which
/// support set each coordinate falls into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SetVote {
    #[serde(with = "crate::serde_matrix")]
    frame: DMatrix<f64>,
    s_a: SupportSets,
    s_b: SupportSets,
    rule: VoteRule,
    layout: InputLayout,
    provenance: String,
}

impl SetVote {
    pub fn new(
        frame: DMatrix<f64>,
        s_a: SupportSets,
        s_b: SupportSets,
        rule: VoteRule,
        layout: InputLayout,
        provenance: String,
    ) -> Self {
        Self { frame, s_a, s_b, rule, layout, provenance }
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        &self.frame
    }

    pub fn rule(&self) -> VoteRule {
        self.rule
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn projections(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(project(&self.frame, &self.layout.to_base(x)?))
    }

    fn state(&self, t: f64) -> State {
        if self.s_a.contains(t) {
            State::A
        } else if self.s_b.contains(t) {
            State::B
        } else {
            State::Neither
        }
    }

    pub fn predict_projections(&self, proj: &[f64]) -> u8 {
        let states: Vec<State> = proj.iter().map(|&t| self.state(t)).collect();
        let ca = states.iter().filter(|&&s| s == State::A).count();
        let cb = states.iter().filter(|&&s| s == State::B).count();
        self.rule.decide(ca, cb, proj.len())
    }

    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        Ok(self.predict_projections(&self.projections(x)?))
    }

    /// Smallest `l2` perturbation of the projections that changes the label.
    ///
    /// Coordinates move independently, and moving coordinate `i` into state
    /// A, B or neither costs its distance to `S_A`, to `S_B`, or out of its
    /// current set. A dynamic program over the pair of counts `(#A, #B)`
    /// finds the cheapest sum of squared costs among count pairs that flip
    /// the vote, which is the exact squared margin. Because the input is
    /// mapped to the projections through orthonormal operations, the same
    /// value is the margin in input space.
    pub fn certified_margin_projections(&self, proj: &[f64]) -> f64 {
        let k = proj.len();
        let current = self.predict_projections(proj);
        let inf = f64::INFINITY;
        let idx = |a: usize, b: usize| a * (k + 1) + b;
        let mut dp = vec![inf; (k + 1) * (k + 1)];
        dp[0] = 0.0;
        for (i, &t) in proj.iter().enumerate() {
            let here = self.state(t);
            let cost = |s: State| -> f64 {
                if s == here {
                    return 0.0;
                }
                match s {
                    State::A => self.s_a.distance(t),
                    State::B => self.s_b.distance(t),
                    State::Neither => match here {
                        State::A => self.s_a.exit_distance(t),
                        _ => self.s_b.exit_distance(t),
                    },
                }
            };
            let (ca, cb, cn) = (cost(State::A).powi(2), cost(State::B).powi(2), cost(State::Neither).powi(2));
            let mut next = vec![inf; dp.len()];
            for a in 0..=i {
                for b in 0..=(i - a) {
                    let v = dp[idx(a, b)];
                    if v == inf {
                        continue;
                    }
                    let slot = &mut next[idx(a + 1, b)];
                    *slot = slot.min(v + ca);
                    let slot = &mut next[idx(a, b + 1)];
                    *slot = slot.min(v + cb);
                    let slot = &mut next[idx(a, b)];
                    *slot = slot.min(v + cn);
                }
            }
            dp = next;
        }
        let mut best = inf;
        for a in 0..=k {
            for b in 0..=(k - a) {
                if self.rule.decide(a, b, k) != current {
                    best = best.min(dp[idx(a, b)]);
                }
            }
        }
        best.sqrt()
    }

    pub fn certified_margin(&self, x: &[f64]) -> Result<f64> {
        Ok(self.certified_margin_projections(&self.projections(x)?))
    }
}

/// Certified margin of a set-vote classifier at `x`.
pub fn certified_margin_setvote(classifier: &SetVote, x: &[f64]) -> Result<f64> {
    classifier.certified_margin(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad1d::Interval;

    fn toy(k: usize, rule: VoteRule) -> SetVote {
        let s_a = SupportSets::new(vec![Interval { lo: -1.0, hi: 1.0 }]);
        let s_b = SupportSets::new(vec![Interval { lo: 3.0, hi: 4.0 }]);
        SetVote::new(DMatrix::identity(k, k), s_a, s_b, rule, InputLayout::new(k, false, false), "toy".into())
    }

    #[test]
    fn single_interval_margin() {
        let c = toy(1, VoteRule::AThreshold(0.9));
        assert_eq!(c.predict(&[0.4]).unwrap(), 0);
        assert!((c.certified_margin(&[0.4]).unwrap() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn cheapest_exit_when_every_coordinate_is_needed() {
        let c = toy(2, VoteRule::AThreshold(1.0));
        // exit distances 0.3 and 0.5
        let m = c.certified_margin(&[0.7, -0.5]).unwrap();
        assert!((m - 0.3).abs() < 1e-15);
    }

    #[test]
    fn majority_needs_entering_the_other_set() {
        let c = toy(1, VoteRule::Majority);
        // from A, leaving gives (0, 0) which is still label 0; must reach S_B
        assert!((c.certified_margin(&[0.4]).unwrap() - 2.6).abs() < 1e-12);
        // from B, leaving S_B is enough
        assert_eq!(c.predict(&[3.2]).unwrap(), 1);
        assert!((c.certified_margin(&[3.2]).unwrap() - 0.2).abs() < 1e-12);
        // neither set: label 0, flips by entering S_B
        assert!((c.certified_margin(&[2.0]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_coordinate_majority() {
        let c = toy(2, VoteRule::Majority);
        // (A, N): need #B > #A, cheapest is leaving A (0.5) and entering B (0.5)
        let m = c.certified_margin(&[0.5, 2.5]).unwrap();
        assert!((m - 0.5f64.hypot(0.5)).abs() < 1e-12);
    }
}
