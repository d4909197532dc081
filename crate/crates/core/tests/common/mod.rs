#![allow(dead_code)]

use ktsep::{AxisLabel, CoilMaps, ComplexTensor, SamplingMask, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cvec(r: &mut ChaCha8Rng, n: usize) -> Vec<C64> {
    (0..n).map(|_| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))).collect()
}

/// Plain conjugate-linear inner product, accumulated left to right.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    assert_eq!(a.len(), b.len());
    let mut s = C64::new(0.0, 0.0);
    for i in 0..a.len() {
        s += a[i].conj() * b[i];
    }
    s
}

pub fn l2(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_diff(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Random maps normalized per pixel; `m = None` gives row maps (PE, COIL).
pub fn random_maps(r: &mut ChaCha8Rng, m: Option<usize>, n: usize, j: usize) -> CoilMaps {
    let (ext, lab) = match m {
        Some(m) => (vec![m, n, j], vec![AxisLabel::Fe, AxisLabel::Pe, AxisLabel::Coil]),
        None => (vec![n, j], vec![AxisLabel::Pe, AxisLabel::Coil]),
    };
    let len = ext.iter().product();
    let mut data = cvec(r, len);
    // keep every pixel away from zero sensitivity
    data.iter_mut().for_each(|v| *v += C64::new(0.1, 0.0));
    CoilMaps::normalized(ComplexTensor::new(ext, lab, data).unwrap()).unwrap()
}

/// Random mask with at least one sampled line in every frame.
pub fn random_mask(r: &mut ChaCha8Rng, n: usize, t: usize) -> SamplingMask {
    let mut data: Vec<bool> = (0..n * t).map(|_| r.random_bool(0.5)).collect();
    for f in 0..t {
        data[r.random_range(0..n) * t + f] = true;
    }
    SamplingMask::from_bools(n, t, data).unwrap()
}

/// Centered unitary DFT matrix, `F[q][p] = exp(-2πi (p - n/2)(q - n/2) / n) / sqrt(n)`.
pub fn dft(n: usize) -> Vec<Vec<C64>> {
    let h = (n / 2) as f64;
    let s = 1.0 / (n as f64).sqrt();
    (0..n)
        .map(|q| {
            (0..n)
                .map(|p| {
                    let ang = -2.0 * std::f64::consts::PI * (p as f64 - h) * (q as f64 - h) / n as f64;
                    C64::from_polar(s, ang)
                })
                .collect()
        })
        .collect()
}
