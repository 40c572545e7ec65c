//! Small numerical kernels shared across modules.

use crate::{Error, Result};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Compensated (Neumaier) summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = NeumaierSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

pub fn std_normal_log_pdf(t: f64) -> f64 {
    -0.5 * t * t - LN_SQRT_2PI
}

pub fn std_normal_pdf(t: f64) -> f64 {
    std_normal_log_pdf(t).exp()
}

pub fn std_normal_cdf(t: f64) -> f64 {
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

/// Upper tail `P(N(0,1) > t)`.
pub fn std_normal_sf(t: f64) -> f64 {
    0.5 * libm::erfc(t / std::f64::consts::SQRT_2)
}

/// `E[t^l]` for `t ~ N(0, 1)`: zero for odd `l`, `(l-1)!!` for even `l`.
pub fn gaussian_moment(l: u32) -> f64 {
    if l % 2 == 1 {
        return 0.0;
    }
    (1..l).step_by(2).map(|j| j as f64).product()
}

/// `E|t|^l` for `t ~ N(0, 1)`. Used as the scale for relative moment errors.
pub fn gaussian_abs_moment(l: u32) -> f64 {
    let mut v = if l % 2 == 0 {
        1.0
    } else {
        (2.0 / std::f64::consts::PI).sqrt()
    };
    let mut j = if l % 2 == 0 { 2 } else { 3 };
    while j <= l {
        v *= (j - 1) as f64;
        j += 2;
    }
    v
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Probabilists' Hermite polynomial `He_l(z)` via the three-term recurrence.
pub fn hermite_he(l: usize, z: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, z);
    if l == 0 {
        return prev;
    }
    for j in 1..l {
        let next = z * cur - j as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

pub fn factorial(n: u32) -> f64 {
    (1..=n).map(|j| j as f64).product()
}

pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

// 15-point Kronrod extension of the 7-point Gauss-Legendre rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Adaptive Gauss–Kronrod integration over `[a, b]`, with the interval first
/// split at every breakpoint that falls inside it.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> Result<f64> {
    const MAX_SEGMENTS: usize = 200_000;
    let mut cuts: Vec<f64> = std::iter::once(a)
        .chain(breakpoints.iter().copied().filter(|&t| t > a && t < b))
        .chain(std::iter::once(b))
        .collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    // (lo, hi, value, error)
    let mut segments: Vec<(f64, f64, f64, f64)> = cuts
        .windows(2)
        .map(|w| {
            let (v, e) = kronrod15(&f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();

    loop {
        let total = compensated_sum(segments.iter().map(|s| s.2));
        let err: f64 = segments.iter().map(|s| s.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if segments.len() >= MAX_SEGMENTS {
            return Err(Error::Invariant(format!(
                "adaptive quadrature did not converge (estimated error {err:e})"
            )));
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .expect("at least one segment");
        let (lo, hi, _, _) = segments.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = kronrod15(&f, lo, mid);
        let (v2, e2) = kronrod15(&f, mid, hi);
        segments.push((lo, mid, v1, e1));
        segments.push((mid, hi, v2, e2));
    }
}
