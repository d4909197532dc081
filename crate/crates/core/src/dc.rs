//! Data consistency in coil k-space, shared by the classical x-update and the
//! network's DC module.
//!
//! With `kb = F_PE S b` and `kd = F_PE S d`:
//!
//! ```text
//! k_p = (μ1·kb + μ2·kd) / (μ1 + μ2)          p ∉ Ω
//! k_p = (z + μ1·kb + μ2·kd) / (1 + μ1 + μ2)  p ∈ Ω
//! x   = S* F_PE⁻¹ k
//! ```
//!
//! For a single coil with unit-modulus sensitivities this is the exact
//! minimizer of ‖z − Ax‖² + μ1‖b − x‖² + μ2‖d − x‖².

use crate::error::{Error, Result};
use crate::operators::SliceEncoder;
use crate::tensor::C64;

/// Intermediates kept for the backward pass.
#[derive(Clone, Debug)]
pub struct DcCache {
    kb: Vec<C64>,
    kd: Vec<C64>,
    out: Vec<C64>,
}

#[derive(Clone, Debug)]
pub struct DcGrads {
    pub b: Vec<C64>,
    pub d: Vec<C64>,
    pub mu1: f64,
    pub mu2: f64,
}

fn check_mu(mu1: f64, mu2: f64) -> Result<()> {
    if !(mu1 + mu2 > 0.0) || !(1.0 + mu1 + mu2 > 0.0) {
        return Err(Error::Config(format!("data consistency needs mu1 + mu2 > 0 (got {mu1}, {mu2})")));
    }
    Ok(())
}

/// Data-consistent image from measured k-t data `z` and the two estimates.
pub fn data_consistency(enc: &SliceEncoder, z: &[C64], b: &[C64], d: &[C64], mu1: f64, mu2: f64) -> Result<Vec<C64>> {
    Ok(dc_forward(enc, z, b, d, mu1, mu2)?.0)
}

pub fn dc_forward(
    enc: &SliceEncoder,
    z: &[C64],
    b: &[C64],
    d: &[C64],
    mu1: f64,
    mu2: f64,
) -> Result<(Vec<C64>, DcCache)> {
    check_mu(mu1, mu2)?;
    if z.len() != enc.kt_len() || b.len() != enc.image_len() || d.len() != enc.image_len() {
        return Err(Error::Shape("data consistency operands do not match the encoder".into()));
    }
    let kb = enc.to_coil_kspace(b);
    let kd = enc.to_coil_kspace(d);
    let (j, t) = (enc.n_coils, enc.n_time);
    let mask = enc.mask();
    let out: Vec<C64> = (0..kb.len())
        .map(|i| {
            let p = i / (j * t);
            let f = i % t;
            let blend = mu1 * kb[i] + mu2 * kd[i];
            if mask[p * t + f] {
                (z[i] + blend) / (1.0 + mu1 + mu2)
            } else {
                blend / (mu1 + mu2)
            }
        })
        .collect();
    let x = enc.from_coil_kspace(&out);
    Ok((x, DcCache { kb, kd, out }))
}

/// Reverse pass. `g_x` is the loss gradient w.r.t. the output image in the
/// `∂L/∂re + i·∂L/∂im` convention; returned gradients use the same convention.
pub fn dc_backward(enc: &SliceEncoder, cache: &DcCache, g_x: &[C64], mu1: f64, mu2: f64) -> DcGrads {
    // adjoint of x = S* F⁻¹ k is F S
    let g_out = enc.to_coil_kspace(g_x);
    let (j, t) = (enc.n_coils, enc.n_time);
    let mask = enc.mask();
    let mut g_kb = vec![C64::new(0.0, 0.0); g_out.len()];
    let mut g_kd = vec![C64::new(0.0, 0.0); g_out.len()];
    let (mut g_mu1, mut g_mu2) = (0.0, 0.0);
    for i in 0..g_out.len() {
        let p = i / (j * t);
        let f = i % t;
        let den = if mask[p * t + f] { 1.0 + mu1 + mu2 } else { mu1 + mu2 };
        let g = g_out[i];
        g_kb[i] = g * (mu1 / den);
        g_kd[i] = g * (mu2 / den);
        // ∂out/∂μ1 = (kb − out)/den
        g_mu1 += (g.conj() * (cache.kb[i] - cache.out[i])).re / den;
        g_mu2 += (g.conj() * (cache.kd[i] - cache.out[i])).re / den;
    }
    DcGrads { b: enc.from_coil_kspace(&g_kb), d: enc.from_coil_kspace(&g_kd), mu1: g_mu1, mu2: g_mu2 }
}
