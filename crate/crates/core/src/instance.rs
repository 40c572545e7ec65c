//! Planted-subspace instances in `R^d`.
//!
//! Along the `k` orthonormal directions of the planted frame a point has
//! i.i.d. coordinates drawn from `D_A` (label 0) or `D_B` (label 1); in the
//! orthogonal complement it is standard Gaussian. The augmented variant
//! prepends a noiseless coordinate equal to `0` or `rho`, and the rotated
//! variant zero-pads to a power of two (padding coordinates are Gaussian)
//! and applies the orthonormal Walsh–Hadamard transform.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{extend_to_full_basis, fwht_in_place, sample_family, SubspaceFamily};
use crate::learners::{Classifier, SetVote, VoteRule};
use crate::numeric::{std_normal_log_pdf, LN_SQRT_2PI};
use crate::quad1d::{build_pair, MixtureSampler, OneDimPair, Side};
use crate::rng::{derive_seed, rng_from_seed};
use crate::{Error, Result};

/// Points per independently seeded sampling chunk.
pub const SAMPLE_CHUNK: usize = 1024;

/// Fraction of planted coordinates that must fall in a support set for the
/// point to belong to the corresponding separation set, as `num / den`.
const VOTE_NUM: usize = 9;
const VOTE_DEN: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub point: Vec<f64>,
    pub label: u8,
}

/// How ambient input vectors relate to the `d` base coordinates.
///
/// Input layout before rotation is `[aug?, base(d), padding]`; when rotated,
/// the padded vector is then multiplied by the orthonormal Hadamard matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InputLayout {
    base_dim: usize,
    augmented: bool,
    rotated: bool,
}

impl InputLayout {
    pub fn new(base_dim: usize, augmented: bool, rotated: bool) -> Self {
        Self { base_dim, augmented, rotated }
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn augmented(&self) -> bool {
        self.augmented
    }

    pub fn rotated(&self) -> bool {
        self.rotated
    }

    fn offset(&self) -> usize {
        usize::from(self.augmented)
    }

    pub fn unpadded_dim(&self) -> usize {
        self.base_dim + self.offset()
    }

    pub fn input_dim(&self) -> usize {
        if self.rotated {
            self.unpadded_dim().next_power_of_two()
        } else {
            self.unpadded_dim()
        }
    }

    /// Number of Gaussian padding coordinates added before rotation.
    pub fn padding(&self) -> usize {
        self.input_dim() - self.unpadded_dim()
    }

    /// Undoes the rotation, returning `[aug?, base, padding]`.
    pub fn unrotate(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), found: x.len() });
        }
        let mut v = x.to_vec();
        if self.rotated {
            fwht_in_place(&mut v)?;
        }
        Ok(v)
    }

    /// The `d` base coordinates of an input vector.
    pub fn to_base(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut v = self.unrotate(x)?;
        v.truncate(self.unpadded_dim());
        v.drain(..self.offset());
        Ok(v)
    }

    /// Builds an input vector from its parts.
    pub fn assemble(&self, aug: f64, base: &[f64], pad: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(base.len(), self.base_dim);
        debug_assert_eq!(pad.len(), self.padding());
        out.clear();
        if self.augmented {
            out.push(aug);
        }
        out.extend_from_slice(base);
        if self.rotated {
            out.extend_from_slice(pad);
            fwht_in_place(out).expect("input dimension is a power of two");
        }
    }

    /// Input-space vector `w` with `<x, w> = <base(x), direction>`.
    pub fn embed_direction(&self, direction: &[f64]) -> Vec<f64> {
        let pad = vec![0.0; self.padding()];
        let mut w = Vec::with_capacity(self.input_dim());
        self.assemble(0.0, direction, &pad, &mut w);
        w
    }
}

/// Constants `(C, c)` of the feasibility condition `m^C * eps * k <= d^{-c}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct FeasibilityConstants {
    pub degree_exponent: f64,
    pub dimension_exponent: f64,
}

impl Default for FeasibilityConstants {
    fn default() -> Self {
        Self { degree_exponent: 3.0, dimension_exponent: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Feasibility {
    pub constants: FeasibilityConstants,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Feasibility {
    pub fn evaluate(d: usize, k: usize, m: usize, eps_orth: f64, constants: FeasibilityConstants) -> Self {
        let lhs = (m as f64).powf(constants.degree_exponent) * eps_orth * k as f64;
        let rhs = (d as f64).powf(-constants.dimension_exponent);
        Self { constants, lhs, rhs, holds: lhs <= rhs }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InstanceParams {
    pub d: usize,
    pub k: usize,
    pub m: usize,
    pub delta: f64,
    pub eps_orth: f64,
    pub rho: f64,
    pub rotated: bool,
    pub family_size: usize,
    /// `ln m / ln d`, the exponent with `m = d^gamma`.
    pub gamma: f64,
    pub feasibility: Feasibility,
}

/// Everything needed to build a [`HardInstance`] from scratch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields, default)]
pub struct InstanceSpec {
    pub d: usize,
    pub k: usize,
    pub m: usize,
    pub delta: Option<f64>,
    pub family_size: usize,
    pub eps_orth: f64,
    pub rho: f64,
    pub rotated: bool,
    /// Planted member; drawn from the seed when absent.
    pub planted: Option<usize>,
    pub seed: u64,
    pub max_retries: usize,
    pub feasibility: FeasibilityConstants,
}

impl Default for InstanceSpec {
    fn default() -> Self {
        Self {
            d: 64,
            k: 4,
            m: 6,
            delta: None,
            family_size: 16,
            eps_orth: 0.5,
            rho: 0.0,
            rotated: false,
            planted: None,
            seed: 1,
            max_retries: 10_000,
            feasibility: FeasibilityConstants::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Membership {
    pub in_a: bool,
    pub in_b: bool,
    pub frac_a: f64,
    pub frac_b: f64,
}

/// Median-norm check against the `[0.8, 1.2] * sqrt(d)` band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct NormScale {
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
    pub within_band: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct HardInstance {
    pair: OneDimPair,
    family: SubspaceFamily,
    planted: usize,
    #[serde(with = "crate::serde_matrix")]
    full_basis: DMatrix<f64>,
    rho: f64,
    layout: InputLayout,
    params: InstanceParams,
}

impl HardInstance {
    /// Assembles an instance from its parts. `rho > 0` selects the augmented
    /// variant.
    pub fn new(
        pair: OneDimPair,
        family: SubspaceFamily,
        planted: usize,
        rho: f64,
        rotated: bool,
        constants: FeasibilityConstants,
    ) -> Result<Self> {
        if planted >= family.len() {
            return Err(Error::InvalidArgument(format!(
                "planted index {planted} outside family of {}",
                family.len()
            )));
        }
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::InvalidArgument(format!("rho = {rho} must be finite and >= 0")));
        }
        let (d, k, m) = (family.ambient_dim(), family.subspace_dim(), pair.m());
        let full_basis = extend_to_full_basis(family.frame(planted))?;
        let params = InstanceParams {
            d,
            k,
            m,
            delta: pair.delta(),
            eps_orth: family.eps_orth(),
            rho,
            rotated,
            family_size: family.len(),
            gamma: if d > 1 { (m as f64).ln() / (d as f64).ln() } else { f64::NAN },
            feasibility: Feasibility::evaluate(d, k, m, family.eps_orth(), constants),
        };
        Ok(Self { pair, family, planted, full_basis, rho, layout: InputLayout::new(d, rho > 0.0, rotated), params })
    }

    pub fn build(spec: &InstanceSpec) -> Result<Self> {
        let pair = build_pair(spec.m, spec.delta)?;
        let family = sample_family(spec.d, spec.k, spec.family_size, spec.eps_orth, spec.seed, spec.max_retries)?;
        let planted = match spec.planted {
            Some(p) => p,
            None => rng_from_seed(derive_seed(spec.seed, 1)).random_range(0..family.len()),
        };
        Self::new(pair, family, planted, spec.rho, spec.rotated, spec.feasibility)
    }

    /// The same instance with a different planted member.
    pub fn with_planted(&self, planted: usize) -> Result<Self> {
        Self::new(
            self.pair.clone(),
            self.family.clone(),
            planted,
            self.rho,
            self.layout.rotated,
            self.params.feasibility.constants,
        )
    }

    pub fn pair(&self) -> &OneDimPair {
        &self.pair
    }

    pub fn family(&self) -> &SubspaceFamily {
        &self.family
    }

    pub fn planted(&self) -> usize {
        self.planted
    }

    pub fn planted_frame(&self) -> &DMatrix<f64> {
        self.family.frame(self.planted)
    }

    pub fn full_basis(&self) -> &DMatrix<f64> {
        &self.full_basis
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn layout(&self) -> InputLayout {
        self.layout
    }

    pub fn params(&self) -> &InstanceParams {
        &self.params
    }

    pub fn input_dim(&self) -> usize {
        self.layout.input_dim()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Sampler for the planted distribution of `label`.
    pub fn sampler(&self, label: u8) -> PointSampler<'_> {
        PointSampler {
            instance: self,
            label,
            mixture: self.pair.mixture(Side::from_label(label)).sampler(),
        }
    }

    /// `n` i.i.d. points of class `label`. Points are produced in chunks of
    /// [`SAMPLE_CHUNK`], chunk `c` seeded with `derive_seed(seed, c)`, so the
    /// output does not depend on the number of threads.
    pub fn sample(&self, label: u8, n: usize, seed: u64) -> Result<Vec<LabeledSample>> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        if label > 1 {
            return Err(Error::InvalidArgument(format!("label {label} is not 0 or 1")));
        }
        let sampler = self.sampler(label);
        let chunks = n.div_ceil(SAMPLE_CHUNK);
        Ok((0..chunks)
            .into_par_iter()
            .flat_map_iter(|c| {
                let mut rng = rng_from_seed(derive_seed(seed, c as u64));
                let len = SAMPLE_CHUNK.min(n - c * SAMPLE_CHUNK);
                let sampler = &sampler;
                (0..len).map(move |_| {
                    let mut point = Vec::new();
                    sampler.draw(&mut rng, &mut point);
                    LabeledSample { point, label }
                })
            })
            .collect())
    }

    /// Projections `<base(x), u_i>` onto the planted frame.
    pub fn projections(&self, x: &[f64]) -> Result<Vec<f64>> {
        let base = self.layout.to_base(x)?;
        Ok(project(self.planted_frame(), &base))
    }

    /// Log density of class `label` at `x`. The rotated variant is handled
    /// by undoing the rotation; the augmented variant has no density.
    pub fn log_density(&self, label: u8, x: &[f64]) -> Result<f64> {
        if self.layout.augmented {
            return Err(Error::NoDensity("the augmented coordinate is a point mass"));
        }
        let v = self.layout.unrotate(x)?;
        let d = self.params.d;
        let (base, pad) = v.split_at(d);
        let mix = self.pair.mixture(Side::from_label(label));
        // sum_j log G(<x, q_j>) over an orthonormal basis is log G_d(x)
        let gaussian = -0.5 * base.iter().map(|t| t * t).sum::<f64>() - d as f64 * LN_SQRT_2PI;
        let planted: f64 = project(self.planted_frame(), base)
            .into_iter()
            .map(|t| mix.log_pdf(t) - std_normal_log_pdf(t))
            .sum();
        let padding: f64 = pad.iter().map(|&t| std_normal_log_pdf(t)).sum();
        Ok(gaussian + planted + padding)
    }

    pub fn membership(&self, x: &[f64]) -> Result<Membership> {
        Ok(self.membership_of_projections(&self.projections(x)?))
    }

    pub fn membership_of_projections(&self, proj: &[f64]) -> Membership {
        membership(&self.pair, proj)
    }

    /// Certified lower bound `sqrt(0.8 k) * gap` on the distance between the
    /// separation sets.
    pub fn set_separation(&self) -> f64 {
        (0.8 * self.params.k as f64).sqrt() * self.pair.gap()
    }

    /// Count-based bound `sqrt(2 ceil(0.9 k) - k) * gap`: two points in
    /// opposite separation sets share at least that many coordinates lying in
    /// opposite support sets.
    pub fn set_separation_by_count(&self) -> f64 {
        let k = self.params.k;
        let need = (VOTE_NUM * k).div_ceil(VOTE_DEN);
        ((2 * need).saturating_sub(k) as f64).sqrt() * self.pair.gap()
    }

    /// Majority set-vote classifier on the planted frame.
    pub fn reference_classifier(&self) -> Classifier {
        Classifier::SetVote(SetVote::new(
            self.planted_frame().clone(),
            self.pair.support(Side::A).clone(),
            self.pair.support(Side::B).clone(),
            VoteRule::Majority,
            self.layout,
            format!("reference set-vote on planted member {}", self.planted),
        ))
    }

    /// Set-vote classifier that trusts family member `index`.
    pub fn member_classifier(&self, index: usize) -> Result<Classifier> {
        if index >= self.family.len() {
            return Err(Error::InvalidArgument(format!("member {index} outside family")));
        }
        Ok(Classifier::SetVote(SetVote::new(
            self.family.frame(index).clone(),
            self.pair.support(Side::A).clone(),
            self.pair.support(Side::B).clone(),
            VoteRule::Majority,
            self.layout,
            format!("set-vote on family member {index}"),
        )))
    }

    /// Median Euclidean norm of `n` class-`label` points versus the
    /// `[0.8, 1.2] * sqrt(input_dim)` band (reported, not enforced).
    pub fn norm_scale(&self, label: u8, n: usize, seed: u64) -> Result<NormScale> {
        let mut norms: Vec<f64> = self
            .sample(label, n, seed)?
            .iter()
            .map(|s| s.point.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        norms.sort_by(f64::total_cmp);
        let median = norms[norms.len() / 2];
        let root = (self.input_dim() as f64).sqrt();
        let (lower, upper) = (0.8 * root, 1.2 * root);
        Ok(NormScale { median, lower, upper, within_band: lower <= median && median <= upper })
    }
}

/// `F^T x` for a column-major frame.
pub fn project(frame: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    let d = frame.nrows();
    frame.as_slice().chunks_exact(d).map(|u| dot(u, x)).collect()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn membership(pair: &OneDimPair, proj: &[f64]) -> Membership {
    let k = proj.len();
    let ca = proj.iter().filter(|&&t| pair.support(Side::A).contains(t)).count();
    let cb = proj.iter().filter(|&&t| pair.support(Side::B).contains(t)).count();
    let frac = |c: usize| if k == 0 { 0.0 } else { c as f64 / k as f64 };
    Membership {
        in_a: k > 0 && VOTE_DEN * ca >= VOTE_NUM * k,
        in_b: k > 0 && VOTE_DEN * cb >= VOTE_NUM * k,
        frac_a: frac(ca),
        frac_b: frac(cb),
    }
}

/// Draws points of one class of an instance.
///
/// A point costs `O(d k)`: with `g ~ N(0, I_d)` and planted coordinates
/// `y_i`, the base part is `g + sum_i (y_i - <g, u_i>) u_i`.
#[derive(Debug, Clone)]
pub struct PointSampler<'a> {
    instance: &'a HardInstance,
    label: u8,
    mixture: MixtureSampler,
}

impl PointSampler<'_> {
    fn aug(&self) -> f64 {
        if self.label == 0 {
            0.0
        } else {
            self.instance.rho
        }
    }

    fn gaussian<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        let inst = self.instance;
        let d = inst.params.d;
        let mut base = Self::gaussian(rng, d);
        for u in inst.planted_frame().as_slice().chunks_exact(d) {
            let shift = self.mixture.sample(rng) - dot(u, &base);
            base.iter_mut().zip(u).for_each(|(b, ui)| *b += shift * ui);
        }
        let pad = Self::gaussian(rng, inst.layout.padding());
        inst.layout.assemble(self.aug(), &base, &pad, out);
    }

    /// Draws a planted point and its Gaussian reference with common random
    /// numbers: both share every Gaussian draw, and the reference keeps
    /// `<g, u_i>` where the planted point has `y_i`. The augmented coordinate
    /// is the same in both.
    pub fn draw_coupled<R: Rng + ?Sized>(&self, rng: &mut R, planted: &mut Vec<f64>, reference: &mut Vec<f64>) {
        let inst = self.instance;
        let d = inst.params.d;
        let g = Self::gaussian(rng, d);
        let mut base = g.clone();
        for u in inst.planted_frame().as_slice().chunks_exact(d) {
            let shift = self.mixture.sample(rng) - dot(u, &g);
            base.iter_mut().zip(u).for_each(|(b, ui)| *b += shift * ui);
        }
        let pad = Self::gaussian(rng, inst.layout.padding());
        inst.layout.assemble(self.aug(), &base, &pad, planted);
        inst.layout.assemble(self.aug(), &g, &pad, reference);
    }

    /// Joint draw of the planted coordinate values `y_i` only (reference
    /// values are independent standard normals).
    pub fn planted_coordinate<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.mixture.sample(rng)
    }

    pub fn instance(&self) -> &HardInstance {
        self.instance
    }

    pub fn label(&self) -> u8 {
        self.label
    }
}
