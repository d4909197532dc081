//! Spatial sparsifying transforms and complex soft-thresholding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::C64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SparseTransform {
    /// Orthonormal full-depth Haar wavelet; length must be a power of two.
    #[default]
    Haar1d,
    /// Undecimated first-order (average, difference) tight frame with
    /// periodic boundary; `DᴴD = I`, 2N coefficients, any length.
    Diff1d,
}

impl SparseTransform {
    pub fn check_len(self, n: usize) -> Result<()> {
        if self == SparseTransform::Haar1d && !n.is_power_of_two() {
            return Err(Error::Config(format!(
                "HAAR_1D needs a power-of-two PE length, got {n}; use DIFF_1D"
            )));
        }
        Ok(())
    }

    pub fn coeff_len(self, n: usize) -> usize {
        match self {
            SparseTransform::Haar1d => n,
            SparseTransform::Diff1d => 2 * n,
        }
    }

    pub fn forward(self, x: &[C64]) -> Vec<C64> {
        match self {
            SparseTransform::Haar1d => haar_forward(x),
            SparseTransform::Diff1d => diff_forward(x),
        }
    }

    pub fn adjoint(self, c: &[C64]) -> Vec<C64> {
        match self {
            SparseTransform::Haar1d => haar_inverse(c),
            SparseTransform::Diff1d => diff_adjoint(c),
        }
    }
}

fn haar_forward(x: &[C64]) -> Vec<C64> {
    let mut out = x.to_vec();
    let mut tmp = vec![C64::new(0.0, 0.0); x.len()];
    let mut len = x.len();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    while len >= 2 {
        let h = len / 2;
        for i in 0..h {
            tmp[i] = (out[2 * i] + out[2 * i + 1]) * s;
            tmp[h + i] = (out[2 * i] - out[2 * i + 1]) * s;
        }
        out[..len].copy_from_slice(&tmp[..len]);
        len = h;
    }
    out
}

fn haar_inverse(c: &[C64]) -> Vec<C64> {
    let mut out = c.to_vec();
    let mut tmp = vec![C64::new(0.0, 0.0); c.len()];
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut len = 2;
    while len <= c.len() {
        let h = len / 2;
        for i in 0..h {
            tmp[2 * i] = (out[i] + out[h + i]) * s;
            tmp[2 * i + 1] = (out[i] - out[h + i]) * s;
        }
        out[..len].copy_from_slice(&tmp[..len]);
        len *= 2;
    }
    out
}

fn diff_forward(x: &[C64]) -> Vec<C64> {
    let n = x.len();
    let mut out = Vec::with_capacity(2 * n);
    out.extend((0..n).map(|i| (x[i] + x[(i + 1) % n]) * 0.5));
    out.extend((0..n).map(|i| (x[i] - x[(i + 1) % n]) * 0.5));
    out
}

fn diff_adjoint(c: &[C64]) -> Vec<C64> {
    let n = c.len() / 2;
    let (lo, hi) = c.split_at(n);
    (0..n)
        .map(|i| {
            let prev = (i + n - 1) % n;
            (lo[i] + lo[prev]) * 0.5 + (hi[i] - hi[prev]) * 0.5
        })
        .collect()
}

/// `soft(x; ρ) = max(|x| − ρ, 0) · x/|x|`, zero at `x = 0`.
pub fn soft(x: C64, rho: f64) -> C64 {
    let mag = x.norm();
    if mag <= rho || mag == 0.0 {
        C64::new(0.0, 0.0)
    } else {
        x * ((mag - rho) / mag)
    }
}

/// Spatial sparse update: `Dᴴ soft(D x_t; λ2/μ2)` for every frame t of a (PE, TIME) image.
pub fn d_update(x: &[C64], n_pe: usize, n_time: usize, transform: SparseTransform, lambda2: f64, mu2: f64) -> Result<Vec<C64>> {
    if !(mu2 > 0.0) {
        return Err(Error::Config(format!("mu2 must be positive, got {mu2}")));
    }
    transform.check_len(n_pe)?;
    let rho = lambda2 / mu2;
    let mut out = vec![C64::new(0.0, 0.0); x.len()];
    let mut col = vec![C64::new(0.0, 0.0); n_pe];
    for f in 0..n_time {
        for p in 0..n_pe {
            col[p] = x[p * n_time + f];
        }
        let coeffs: Vec<C64> = transform.forward(&col).into_iter().map(|c| soft(c, rho)).collect();
        for (p, v) in transform.adjoint(&coeffs).into_iter().enumerate() {
            out[p * n_time + f] = v;
        }
    }
    Ok(out)
}
