//! Statistical-query oracle over a hidden planted instance.
//!
//! A query is a function `h` from input points to `[0, 1]`; the oracle
//! returns `(u, v)` approximating `E[h]` under class 0 and class 1 to
//! within the precision `tau`. Answers are Monte Carlo means over enough
//! fresh samples that the Hoeffding error exceeds `tau / 2` with
//! probability at most `1e-6`.
//!
//! In camouflage mode each class is also evaluated on its Gaussian
//! reference (planted coordinates replaced by standard normals, common
//! random numbers shared with the planted draw). When the two estimates are
//! within `tau / 2` the reference value is returned, so the answer is still
//! `tau`-accurate but carries no information about the planted frame.

use std::sync::Arc;

use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::SubspaceFamily;
use crate::instance::{dot, HardInstance, InputLayout};
use crate::quad1d::{Side, SupportSets};
use crate::rng::{derive_seed, rng_from_seed, StdRng};
use crate::stats::{binomial_band, Welford};
use crate::{Error, Result};

/// Per-query failure probability of the Hoeffding calibration.
pub const FAILURE_PROBABILITY: f64 = 1e-6;

/// Monte Carlo draws per independently seeded chunk.
const MC_CHUNK: usize = 16_384;

/// Function of the projection `<x, w>` only.
pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Function of the whole input point.
pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum QueryKind {
    /// `h(x) = f(<x, w>)`; the oracle samples the projection directly.
    Projection { direction: Vec<f64>, f: ScalarFn },
    General(PointFn),
}

/// A bounded statistical query with a free-text description for the ledger.
#[derive(Clone)]
pub struct SqQuery {
    description: String,
    kind: QueryKind,
}

impl std::fmt::Debug for SqQuery {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SqQuery").field("description", &self.description).finish_non_exhaustive()
    }
}

impl SqQuery {
    pub fn general(description: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { description: description.into(), kind: QueryKind::General(Arc::new(f)) }
    }

    /// Query that depends on `x` only through `<x, direction>`.
    pub fn projection(
        description: impl Into<String>,
        direction: Vec<f64>,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { description: description.into(), kind: QueryKind::Projection { direction, f: Arc::new(f) } }
    }

    pub fn constant(value: f64) -> Self {
        Self::general(format!("constant {value}"), move |_| value)
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match &self.kind {
            QueryKind::Projection { direction, f } => f(dot(direction, x)),
            QueryKind::General(f) => f(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AnswerMode {
    Honest,
    Camouflage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LedgerEntry {
    pub query_index: usize,
    pub description: String,
    pub u: f64,
    pub v: f64,
    pub mode_used: AnswerMode,
    pub camouflage_broken: bool,
}

/// Monte Carlo sample count for precision `tau`:
/// `ceil(ln(2 / p) / (2 (tau / 2)^2))` with `p = 1e-6`.
pub fn required_samples(tau: f64) -> usize {
    let half = tau / 2.0;
    ((2.0 / FAILURE_PROBABILITY).ln() / (2.0 * half * half)).ceil() as usize
}

pub struct SqOracle {
    hidden: Arc<HardInstance>,
    tau: f64,
    mode: AnswerMode,
    budget: usize,
    mc_samples: usize,
    seed: u64,
    ledger: Vec<LedgerEntry>,
}

impl std::fmt::Debug for SqOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SqOracle")
            .field("tau", &self.tau)
            .field("mode", &self.mode)
            .field("budget", &self.budget)
            .field("mc_samples", &self.mc_samples)
            .field("queries", &self.ledger.len())
            .finish_non_exhaustive()
    }
}

/// Per-class Monte Carlo estimates of one query.
struct Estimates {
    planted: Welford,
    reference: Option<Welford>,
}

impl SqOracle {
    pub fn new(hidden: Arc<HardInstance>, tau: f64, mode: AnswerMode, budget: usize, seed: u64) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidArgument(format!("tau = {tau} outside (0, 1)")));
        }
        Ok(Self { hidden, tau, mode, budget, mc_samples: required_samples(tau), seed, ledger: Vec::new() })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn mode(&self) -> AnswerMode {
        self.mode
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn remaining(&self) -> usize {
        self.budget - self.ledger.len()
    }

    pub fn mc_samples(&self) -> usize {
        self.mc_samples
    }

    /// Dimension of the points queries are evaluated on.
    pub fn input_dim(&self) -> usize {
        self.hidden.input_dim()
    }

    pub fn ledger(&self) -> &[LedgerEntry] {
        &self.ledger
    }

    /// The ledger as JSON lines.
    pub fn ledger_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.ledger {
            out.push_str(&serde_json::to_string(e)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Answers `q` with `(u, v)` for classes 0 and 1 and records it.
    pub fn query(&mut self, q: &SqQuery) -> Result<(f64, f64)> {
        if self.ledger.len() >= self.budget {
            return Err(Error::BudgetExhausted(self.budget));
        }
        let index = self.ledger.len();
        let query_seed = derive_seed(self.seed, index as u64);
        let coupled = self.mode == AnswerMode::Camouflage;
        let mut answers = [0.0; 2];
        let mut broken = false;
        for label in 0..2u8 {
            let est = self.estimate(q, label, derive_seed(query_seed, label as u64), coupled)?;
            let truth = est.planted.mean();
            answers[label as usize] = match est.reference {
                Some(r) if (truth - r.mean()).abs() <= self.tau / 2.0 => r.mean(),
                Some(_) => {
                    broken = true;
                    truth
                }
                None => truth,
            };
        }
        self.ledger.push(LedgerEntry {
            query_index: index,
            description: q.description.clone(),
            u: answers[0],
            v: answers[1],
            mode_used: self.mode,
            camouflage_broken: broken,
        });
        Ok((answers[0], answers[1]))
    }

    fn estimate(&self, q: &SqQuery, label: u8, seed: u64, coupled: bool) -> Result<Estimates> {
        let n = self.mc_samples;
        let chunks = n.div_ceil(MC_CHUNK);
        let check = |value: f64| -> Result<f64> {
            if (0.0..=1.0).contains(&value) {
                Ok(value)
            } else {
                Err(Error::QueryOutOfRange { description: q.description.clone(), value })
            }
        };
        let inst = &*self.hidden;
        let plan = match &q.kind {
            QueryKind::Projection { direction, f } => Some((ProjectionPlan::new(inst, direction, label)?, f)),
            QueryKind::General(_) => None,
        };
        let sampler = inst.sampler(label);
        let parts = (0..chunks)
            .into_par_iter()
            .map(|c| -> Result<(Welford, Welford)> {
                let mut rng = rng_from_seed(derive_seed(seed, c as u64));
                let len = MC_CHUNK.min(n - c * MC_CHUNK);
                let (mut wp, mut wr) = (Welford::new(), Welford::new());
                let (mut xp, mut xr) = (Vec::new(), Vec::new());
                for _ in 0..len {
                    match &plan {
                        Some((plan, f)) => {
                            let (tp, tr) = plan.draw(&mut rng);
                            wp.push(check(f(tp))?);
                            if coupled {
                                wr.push(check(f(tr))?);
                            }
                        }
                        None => {
                            if coupled {
                                sampler.draw_coupled(&mut rng, &mut xp, &mut xr);
                                wr.push(check(q.evaluate(&xr))?);
                            } else {
                                sampler.draw(&mut rng, &mut xp);
                            }
                            wp.push(check(q.evaluate(&xp))?);
                        }
                    }
                }
                Ok((wp, wr))
            })
            .collect::<Result<Vec<_>>>()?;
        let (mut planted, mut reference) = (Welford::new(), Welford::new());
        for (p, r) in &parts {
            planted.merge(p);
            reference.merge(r);
        }
        Ok(Estimates { planted, reference: coupled.then_some(reference) })
    }
}

/// Largest atom count for which the planted part of `<x, w>` is tabulated.
const MAX_ATOMS: usize = 1 << 16;

/// Exact law of `<x, w>` for one class. With `c_i = <u_i, w_base>` and
/// `sigma` the norm of the part of `w` orthogonal to the planted frame
/// (padding included), `<x, w> = w_aug * aug + sum_i c_i y_i + sigma * N(0, 1)`.
/// Each `y_i` is a Gaussian mixture with common variance `delta`, so the sum
/// is a mixture with atoms `sum_i c_i mu_{j_i}` and standard deviation
/// `sqrt(delta |c|^2 + sigma^2)`. The reference is `N(offset, |c|^2 + sigma^2)`
/// and shares the normal draw.
struct ProjectionPlan {
    offset: f64,
    atoms: Atoms,
    planted_sd: f64,
    reference_sd: f64,
}

enum Atoms {
    Table(Vec<f64>, WeightedAliasIndex<f64>),
    /// Too many atoms: draw one component per coordinate.
    PerCoordinate { coefs: Vec<f64>, centers: Vec<f64>, cdf: Vec<f64> },
}

impl ProjectionPlan {
    fn new(inst: &HardInstance, direction: &[f64], label: u8) -> Result<Self> {
        let layout = inst.layout();
        let v = layout.unrotate(direction)?;
        let (aug_coef, rest) = if layout.augmented() { (v[0], &v[1..]) } else { (0.0, &v[..]) };
        let d = layout.base_dim();
        let (base, pad) = rest.split_at(d);
        let frame = inst.planted_frame();
        let coefs = crate::instance::project(frame, base);
        let mut resid = base.to_vec();
        for (u, c) in frame.as_slice().chunks_exact(d).zip(&coefs) {
            resid.iter_mut().zip(u).for_each(|(r, ui)| *r -= c * ui);
        }
        let sigma2 = dot(&resid, &resid) + dot(pad, pad);
        let c2 = dot(&coefs, &coefs);
        let aug = if label == 0 { 0.0 } else { inst.rho() };

        let mix = inst.pair().mixture(Side::from_label(label));
        let (centers, weights) = (mix.centers(), mix.weights());
        let count = centers.len().checked_pow(coefs.len() as u32).filter(|&n| n <= MAX_ATOMS);
        let atoms = match count {
            Some(_) => {
                let (mut values, mut probs) = (vec![0.0], vec![1.0]);
                for &c in &coefs {
                    let mut nv = Vec::with_capacity(values.len() * centers.len());
                    let mut np = Vec::with_capacity(values.len() * centers.len());
                    for (v, p) in values.iter().zip(&probs) {
                        for (mu, w) in centers.iter().zip(weights) {
                            nv.push(v + c * mu);
                            np.push(p * w);
                        }
                    }
                    values = nv;
                    probs = np;
                }
                let index = WeightedAliasIndex::new(probs)
                    .map_err(|e| Error::Invariant(format!("atom table: {e}")))?;
                Atoms::Table(values, index)
            }
            None => {
                let mut acc = 0.0;
                let cdf = weights
                    .iter()
                    .map(|w| {
                        acc += w;
                        acc
                    })
                    .collect();
                Atoms::PerCoordinate { coefs, centers: centers.to_vec(), cdf }
            }
        };
        Ok(Self {
            offset: aug_coef * aug,
            atoms,
            planted_sd: (mix.delta() * c2 + sigma2).sqrt(),
            reference_sd: (c2 + sigma2).sqrt(),
        })
    }

    fn draw(&self, rng: &mut StdRng) -> (f64, f64) {
        let atom = match &self.atoms {
            Atoms::Table(values, index) => values[index.sample(rng)],
            Atoms::PerCoordinate { coefs, centers, cdf } => coefs
                .iter()
                .map(|c| {
                    let u: f64 = rng.random();
                    c * centers[cdf.partition_point(|&p| p <= u).min(centers.len() - 1)]
                })
                .sum(),
        };
        let z: f64 = rng.sample(StandardNormal);
        (self.offset + atom + self.planted_sd * z, self.offset + self.reference_sd * z)
    }
}

/// An SQ algorithm that must name the planted family member using oracle
/// answers only.
pub trait SqLearner {
    fn identify(&mut self, oracle: &mut SqOracle, rng: &mut StdRng) -> Result<usize>;
}

/// Index of a maximal score, ties broken uniformly at random.
fn argmax_random(scores: &[f64], rng: &mut StdRng) -> usize {
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] == best).collect();
    ties[rng.random_range(0..ties.len())]
}

/// Queries `1[<x, u> in S_A]` along every frame vector of every member and
/// names the member whose vectors show the largest class-0 excess.
#[derive(Debug, Clone)]
pub struct AlignedSupportLearner {
    family: Arc<SubspaceFamily>,
    support_a: SupportSets,
    layout: InputLayout,
}

impl AlignedSupportLearner {
    pub fn new(family: Arc<SubspaceFamily>, support_a: SupportSets, layout: InputLayout) -> Self {
        Self { family, support_a, layout }
    }

    pub fn for_instance(instance: &HardInstance) -> Self {
        Self::new(
            Arc::new(instance.family().clone()),
            instance.pair().support(Side::A).clone(),
            instance.layout(),
        )
    }
}

impl SqLearner for AlignedSupportLearner {
    fn identify(&mut self, oracle: &mut SqOracle, rng: &mut StdRng) -> Result<usize> {
        let mut scores = vec![0.0; self.family.len()];
        'members: for (j, frame) in self.family.frames().iter().enumerate() {
            for u in frame.column_iter() {
                if oracle.remaining() == 0 {
                    break 'members;
                }
                let set = self.support_a.clone();
                let w = self.layout.embed_direction(u.as_slice());
                let q = SqQuery::projection(format!("support indicator, member {j}"), w, move |t| {
                    f64::from(u8::from(set.contains(t)))
                });
                let (a, b) = oracle.query(&q)?;
                scores[j] += a - b;
            }
        }
        Ok(argmax_random(&scores, rng))
    }
}

/// Issues random halfspace queries `1[<x, w> > b]` and credits each member
/// with the answer gap weighted by how much of `w` lies in its subspace.
#[derive(Debug, Clone)]
pub struct RandomHalfspaceLearner {
    family: Arc<SubspaceFamily>,
    layout: InputLayout,
    queries: usize,
}

impl RandomHalfspaceLearner {
    pub fn new(family: Arc<SubspaceFamily>, layout: InputLayout, queries: usize) -> Self {
        Self { family, layout, queries }
    }
}

impl SqLearner for RandomHalfspaceLearner {
    fn identify(&mut self, oracle: &mut SqOracle, rng: &mut StdRng) -> Result<usize> {
        let dim = self.layout.input_dim();
        let mut scores = vec![0.0; self.family.len()];
        for i in 0..self.queries {
            if oracle.remaining() == 0 {
                break;
            }
            let raw: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = dot(&raw, &raw).sqrt();
            let w: Vec<f64> = raw.iter().map(|v| v / norm).collect();
            let threshold: f64 = 0.5 * rng.sample::<f64, _>(StandardNormal);
            let q = SqQuery::projection(format!("random halfspace {i}"), w.clone(), move |t| {
                f64::from(u8::from(t > threshold))
            });
            let (a, b) = oracle.query(&q)?;
            let base = self.layout.to_base(&w)?;
            for (j, frame) in self.family.frames().iter().enumerate() {
                let weight: f64 = crate::instance::project(frame, &base).iter().map(|c| c * c).sum();
                scores[j] += (a - b).abs() * weight;
            }
        }
        Ok(argmax_random(&scores, rng))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GameReport {
    pub trials: usize,
    pub successes: usize,
    pub accuracy: f64,
    pub family_size: usize,
    pub chance: f64,
    /// Central 95% binomial band of success counts under pure guessing.
    pub chance_band: (u64, u64),
    pub learner_errors: usize,
    pub queries: usize,
    pub camouflage_broken: usize,
}

impl GameReport {
    pub fn within_chance_band(&self) -> bool {
        let s = self.successes as u64;
        self.chance_band.0 <= s && s <= self.chance_band.1
    }
}

/// Plays `trials` rounds: plant a uniformly random member, build its oracle
/// with `factory(planted, seed)`, and ask `learner` to name it. A learner
/// error (budget exhaustion included) counts as a loss.
pub fn distinguishing_game<F, L>(
    mut factory: F,
    learner: &mut L,
    family_size: usize,
    trials: usize,
    seed: u64,
) -> Result<GameReport>
where
    F: FnMut(usize, u64) -> Result<SqOracle>,
    L: SqLearner + ?Sized,
{
    if family_size == 0 || trials == 0 {
        return Err(Error::InvalidArgument("family size and trial count must be positive".into()));
    }
    let (mut successes, mut errors, mut queries, mut broken) = (0, 0, 0, 0);
    for t in 0..trials {
        let trial_seed = derive_seed(seed, t as u64);
        let mut rng = rng_from_seed(trial_seed);
        let planted = rng.random_range(0..family_size);
        let mut oracle = factory(planted, derive_seed(trial_seed, 1))?;
        match learner.identify(&mut oracle, &mut rng) {
            Ok(guess) if guess == planted => successes += 1,
            Ok(_) => {}
            Err(_) => errors += 1,
        }
        queries += oracle.ledger().len();
        broken += oracle.ledger().iter().filter(|e| e.camouflage_broken).count();
    }
    let chance = 1.0 / family_size as f64;
    Ok(GameReport {
        trials,
        successes,
        accuracy: successes as f64 / trials as f64,
        family_size,
        chance,
        chance_band: binomial_band(trials as u64, chance, 0.95),
        learner_errors: errors,
        queries,
        camouflage_broken: broken,
    })
}
