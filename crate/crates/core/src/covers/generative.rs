//! Feed-forward generators with bounded weights, the weight-perturbation
//! Lipschitz bound, and weight-grid cover sizes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, t: f64) -> f64 {
        match self {
            Activation::Relu => t.max(0.0),
            Activation::Tanh => t.tanh(),
            Activation::Identity => t,
        }
    }
}

/// `g_w(x) = W_l s(W_{l-1} ... s(W_1 x))` with a 1-Lipschitz activation `s`
/// fixing 0, and every weight in `[-B, B]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GenerativeNet {
    #[serde(with = "crate::serde_matrix::vec")]
    layers: Vec<DMatrix<f64>>,
    activation: Activation,
    weight_bound: f64,
}

impl GenerativeNet {
    pub fn new(layers: Vec<DMatrix<f64>>, activation: Activation, weight_bound: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("a network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[1].ncols() != pair[0].nrows() {
                return Err(Error::ArchitectureMismatch(format!(
                    "layer maps to {} but the next expects {}",
                    pair[0].nrows(),
                    pair[1].ncols()
                )));
            }
        }
        if layers.iter().flat_map(|l| l.iter()).any(|w| !(w.abs() <= weight_bound)) {
            return Err(Error::InvalidArgument(format!("weights must lie in [-{weight_bound}, {weight_bound}]")));
        }
        Ok(Self { layers, activation, weight_bound })
    }

    pub fn layers(&self) -> &[DMatrix<f64>] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn weight_bound(&self) -> f64 {
        self.weight_bound
    }

    /// Largest layer width, input included.
    pub fn max_width(&self) -> usize {
        self.layers.iter().map(|l| l.nrows().max(l.ncols())).max().unwrap_or(0)
    }

    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(|l| l.len()).sum()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].ncols()
    }

    fn same_architecture(&self, other: &Self) -> bool {
        self.activation == other.activation
            && self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.shape() == b.shape())
    }

    /// `l1` distance between the weight vectors of two nets.
    pub fn weight_l1_distance(&self, other: &Self) -> Result<f64> {
        if !self.same_architecture(other) {
            return Err(Error::ArchitectureMismatch("networks differ in shape or activation".into()));
        }
        Ok(self.layers.iter().zip(&other.layers).map(|(a, b)| (a - b).abs().sum()).sum())
    }
}

pub fn net_forward(net: &GenerativeNet, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != net.input_dim() {
        return Err(Error::DimensionMismatch { expected: net.input_dim(), found: x.len() });
    }
    let mut h = DVector::from_column_slice(x);
    let last = net.layers.len() - 1;
    for (i, w) in net.layers.iter().enumerate() {
        h = w * h;
        if i < last {
            h.apply(|t| *t = net.activation.apply(*t));
        }
    }
    Ok(h.iter().copied().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LipschitzCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Checks `|g_w(x) - g_w'(x)| <= |w - w'|_1 |x| (d B)^l` with `d` the
/// largest width, `B` the larger weight bound and `l` the depth.
pub fn lipschitz_bound_check(net: &GenerativeNet, perturbed: &GenerativeNet, x: &[f64]) -> Result<LipschitzCheck> {
    let dw = net.weight_l1_distance(perturbed)?;
    let a = net_forward(net, x)?;
    let b = net_forward(perturbed, x)?;
    let lhs = a.iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let db = net.max_width() as f64 * net.weight_bound.max(perturbed.weight_bound);
    let rhs = dw * xn * db.powi(net.depth() as i32);
    Ok(LipschitzCheck { lhs, rhs, ok: lhs <= rhs * (1.0 + 1e-9) })
}

/// Natural log of the weight-grid cover size `(1 + 2B/alpha)^{2m}` for a
/// pair of generators with `m` weights each.
pub fn weight_grid_cover_size(m: usize, weight_bound: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("grid pitch {alpha} must be positive")));
    }
    Ok(2.0 * m as f64 * (1.0 + 2.0 * weight_bound / alpha).ln())
}

/// Grid values `-B, -B + alpha, ...` up to `B` along one weight.
pub fn grid_axis(weight_bound: f64, alpha: f64) -> Vec<f64> {
    let steps = (2.0 * weight_bound / alpha + 1e-9).floor() as usize;
    (0..=steps).map(|i| (-weight_bound + i as f64 * alpha).min(weight_bound)).collect()
}

/// Every weight vector of the grid for one generator with `m` weights.
pub fn enumerate_weight_grid(m: usize, weight_bound: f64, alpha: f64) -> Result<Vec<Vec<f64>>> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("grid pitch {alpha} must be positive")));
    }
    let axis = grid_axis(weight_bound, alpha);
    let total = axis.len().checked_pow(m as u32).filter(|&t| t <= 10_000_000);
    let total = total.ok_or_else(|| Error::InvalidArgument("grid too large to enumerate".into()))?;
    Ok((0..total)
        .map(|mut idx| {
            (0..m)
                .map(|_| {
                    let v = axis[idx % axis.len()];
                    idx /= axis.len();
                    v
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_weights_give_zero() {
        let net = GenerativeNet::new(vec![DMatrix::identity(3, 3)], Activation::Relu, 1.0).unwrap();
        let c = lipschitz_bound_check(&net, &net, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((c.lhs, c.rhs, c.ok), (0.0, 0.0, true));
    }

    #[test]
    fn single_weight_perturbation() {
        let eta = 0.25;
        let net = GenerativeNet::new(vec![DMatrix::identity(3, 3)], Activation::Relu, 1.0).unwrap();
        let mut w = DMatrix::identity(3, 3);
        w[(2, 0)] = eta;
        let other = GenerativeNet::new(vec![w], Activation::Relu, 1.0).unwrap();
        let c = lipschitz_bound_check(&net, &other, &[1.0, 0.0, 0.0]).unwrap();
        assert!((c.lhs - eta).abs() < 1e-15);
        assert!((c.rhs - eta * 3.0).abs() < 1e-15);
        assert!(c.ok);
    }

    #[test]
    fn architecture_mismatch() {
        let a = GenerativeNet::new(vec![DMatrix::identity(2, 2)], Activation::Relu, 1.0).unwrap();
        let b = GenerativeNet::new(vec![DMatrix::identity(3, 2)], Activation::Relu, 1.0).unwrap();
        assert!(matches!(lipschitz_bound_check(&a, &b, &[1.0, 1.0]), Err(Error::ArchitectureMismatch(_))));
        assert!(GenerativeNet::new(vec![DMatrix::identity(2, 2), DMatrix::identity(3, 3)], Activation::Relu, 1.0).is_err());
        assert!(GenerativeNet::new(vec![DMatrix::from_element(1, 1, 2.0)], Activation::Relu, 1.0).is_err());
    }

    #[test]
    fn cover_size_formula() {
        assert!((weight_grid_cover_size(1, 1.0, 2.0).unwrap() - 2.0 * 2f64.ln()).abs() < 1e-15);
        let a = weight_grid_cover_size(3, 1.0, 1e-3).unwrap();
        let b = weight_grid_cover_size(3, 1.0, 1e-4).unwrap();
        assert!((b - a - 6.0 * 10f64.ln()).abs() < 1e-2);
        assert!(weight_grid_cover_size(1, 1.0, 0.0).is_err());
    }

    #[test]
    fn grid_enumeration() {
        let g = enumerate_weight_grid(2, 1.0, 0.5).unwrap();
        assert_eq!(g.len(), 25);
        assert_eq!(grid_axis(1.0, 0.5), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let per_copy = (0.5 * weight_grid_cover_size(2, 1.0, 0.5).unwrap()).exp();
        assert!((per_copy - 25.0).abs() < 1e-9);
    }

    #[test]
    fn grid_log_size_shape() {
        // alpha = (dB/delta)^{-c l}: log size / (m l log(dB/delta)) tends to 2c
        let (d, b, l, m, c) = (8.0f64, 1.0f64, 2.0f64, 10usize, 0.5f64);
        let mut last = f64::INFINITY;
        for delta in [1e-2, 1e-4, 1e-8, 1e-16] {
            let alpha = (d * b / delta).powf(-c * l);
            let ratio = weight_grid_cover_size(m, b, alpha).unwrap() / (m as f64 * l * (d * b / delta).ln());
            assert!(ratio <= 2.0 * c + 2.0 * (2.0 * b + 1.0).ln() / (l * (d * b / delta).ln()) + 1e-12);
            assert!((ratio - 2.0 * c).abs() < (last - 2.0 * c).abs() + 1e-12);
            last = ratio;
        }
        assert!((last - 2.0 * c).abs() < 0.05);
    }
}
