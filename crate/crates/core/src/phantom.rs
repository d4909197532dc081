//! Synthetic dynamic phantoms, coil sensitivities and acquisition simulation.
//!
//! Coordinates are normalized to [-1, 1] along FE and PE. Each ellipse pulses
//! sinusoidally: in frame τ its semi-axes are scaled by
//! `1 + amplitude · sin(2πτ/T + phase)`.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{transform_axis, Direction};
use crate::operators::{apply_mask, coil_expand, CoilMaps, SamplingMask};
use crate::seed::rng;
use crate::tensor::{require_domain, AxisLabel, ComplexTensor, Domain, KTVolume, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    /// (FE, PE) center in normalized coordinates.
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    /// Complex intensity as (re, im).
    pub intensity: [f64; 2],
    /// Pulsation amplitude as a fraction of the semi-axes.
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Ellipse {
    fn scale(&self, frame: usize, n_frames: usize) -> f64 {
        let arg = 2.0 * std::f64::consts::PI * frame as f64 / n_frames as f64 + self.phase;
        1.0 + self.amplitude * arg.sin()
    }

    fn contains(&self, u: f64, v: f64, scale: f64) -> bool {
        let a = (u - self.center[0]) / (self.semi_axes[0] * scale);
        let b = (v - self.center[1]) / (self.semi_axes[1] * scale);
        a * a + b * b <= 1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub m: usize,
    pub n: usize,
    pub t: usize,
    pub j: usize,
    pub features: Vec<Ellipse>,
    #[serde(default)]
    pub background: [f64; 2],
    /// Complex noise standard deviation relative to the peak k-space magnitude.
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m < 4 || self.n < 4 || self.t < 1 || self.j < 1 {
            return Err(Error::Config(format!(
                "phantom extents must be >= 4 (got m={}, n={}, t={}, j={})",
                self.m, self.n, self.t, self.j
            )));
        }
        for (i, e) in self.features.iter().enumerate() {
            if !(e.semi_axes[0] > 0.0 && e.semi_axes[1] > 0.0) {
                return Err(Error::Config(format!("ellipse {i} has a non-positive semi-axis")));
            }
            if !(e.amplitude.abs() < 1.0) {
                return Err(Error::Config(format!(
                    "ellipse {i} pulsation amplitude {} collapses the ellipse",
                    e.amplitude
                )));
            }
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be >= 0".into()));
        }
        Ok(())
    }

    /// A cardiac-like layout (body, heart wall, blood pool, static organs)
    /// with geometry and dynamics jittered by `seed`.
    pub fn desk(m: usize, n: usize, t: usize, j: usize, seed: u64) -> Self {
        let mut r = rng(seed);
        let mut jit = |s: f64| (r.random::<f64>() - 0.5) * 2.0 * s;
        let heart_c = [0.1 + jit(0.08), -0.1 + jit(0.08)];
        let heart_phase = jit(std::f64::consts::PI);
        let body = Ellipse {
            center: [jit(0.04), jit(0.04)],
            semi_axes: [0.82 + jit(0.05), 0.72 + jit(0.05)],
            intensity: [0.35 + jit(0.05), 0.0],
            amplitude: 0.0,
            phase: 0.0,
        };
        let wall = Ellipse {
            center: heart_c,
            semi_axes: [0.34 + jit(0.04), 0.30 + jit(0.04)],
            intensity: [0.25 + jit(0.05), 0.05 + jit(0.02)],
            amplitude: 0.08 + jit(0.02),
            phase: heart_phase,
        };
        let pool = Ellipse {
            center: [heart_c[0] + jit(0.02), heart_c[1] + jit(0.02)],
            semi_axes: [0.2 + jit(0.03), 0.17 + jit(0.03)],
            intensity: [0.45 + jit(0.05), 0.0],
            amplitude: 0.2 + jit(0.04),
            phase: heart_phase,
        };
        let organ_a = Ellipse {
            center: [-0.45 + jit(0.06), 0.35 + jit(0.06)],
            semi_axes: [0.16 + jit(0.03), 0.22 + jit(0.03)],
            intensity: [0.3 + jit(0.08), 0.0],
            amplitude: 0.0,
            phase: 0.0,
        };
        let organ_b = Ellipse {
            center: [0.5 + jit(0.06), 0.4 + jit(0.06)],
            semi_axes: [0.12 + jit(0.02), 0.1 + jit(0.02)],
            intensity: [-0.15 + jit(0.04), 0.0],
            amplitude: 0.03,
            phase: jit(std::f64::consts::PI),
        };
        Self {
            m,
            n,
            t,
            j,
            features: vec![body, wall, pool, organ_a, organ_b],
            background: [0.0, 0.0],
            noise_std: 0.0,
            seed,
        }
    }
}

fn coord(i: usize, len: usize) -> f64 {
    (i as f64 + 0.5) / len as f64 * 2.0 - 1.0
}

/// Renders the phantom as an IMAGE volume (FE, PE, TIME).
pub fn gen_phantom(spec: &PhantomSpec) -> Result<KTVolume> {
    spec.validate()?;
    let (m, n, t) = (spec.m, spec.n, spec.t);
    let bg = C64::new(spec.background[0], spec.background[1]);
    let mut data = vec![bg; m * n * t];
    for f in 0..t {
        for e in &spec.features {
            let s = e.scale(f, t);
            let val = C64::new(e.intensity[0], e.intensity[1]);
            for i in 0..m {
                let u = coord(i, m);
                for p in 0..n {
                    if e.contains(u, coord(p, n), s) {
                        data[(i * n + p) * t + f] += val;
                    }
                }
            }
        }
    }
    KTVolume::image(m, n, t, data)
}

pub const DEFAULT_COIL_WIDTH: f64 = 0.9;

/// Smooth Gaussian-lobe coil sensitivities with a slowly varying phase,
/// jointly normalized to Σ_j |s_j|² = 1 per pixel.
pub fn gen_coil_maps(m: usize, n: usize, j: usize, seed: u64) -> Result<CoilMaps> {
    gen_coil_maps_with_width(m, n, j, seed, DEFAULT_COIL_WIDTH)
}

pub fn gen_coil_maps_with_width(m: usize, n: usize, j: usize, seed: u64, width: f64) -> Result<CoilMaps> {
    if j == 0 || m == 0 || n == 0 {
        return Err(Error::Config("coil maps need positive extents and at least one coil".into()));
    }
    let mut r = rng(seed);
    let two_pi = 2.0 * std::f64::consts::PI;
    let offset: f64 = r.random::<f64>() * two_pi;
    let lobes: Vec<([f64; 2], f64, f64)> = (0..j)
        .map(|c| {
            let ang = offset + two_pi * c as f64 / j as f64;
            let phase0 = r.random::<f64>() * two_pi;
            let tilt = r.random::<f64>() * two_pi;
            ([1.2 * ang.cos(), 1.2 * ang.sin()], phase0, tilt)
        })
        .collect();
    let mut data = Vec::with_capacity(m * n * j);
    for i in 0..m {
        let u = coord(i, m);
        for p in 0..n {
            let v = coord(p, n);
            for &(ctr, phase0, tilt) in &lobes {
                let d2 = (u - ctr[0]).powi(2) + (v - ctr[1]).powi(2);
                let mag = if j == 1 { 1.0 } else { (-d2 / (2.0 * width * width)).exp() };
                let ph = phase0 + 0.5 * std::f64::consts::PI * (u * tilt.cos() + v * tilt.sin());
                data.push(C64::from_polar(mag, ph));
            }
        }
    }
    let t = ComplexTensor::new(vec![m, n, j], vec![AxisLabel::Fe, AxisLabel::Pe, AxisLabel::Coil], data)?;
    CoilMaps::normalized(t)
}

/// `Y = U (F_2D S X + noise)`: coil expansion, centered 2D DFT (FE then PE),
/// complex Gaussian noise at sampled positions, then undersampling.
///
/// `noise_std` is relative to the peak noiseless k-space magnitude; the
/// complex noise has `E|n|² = (noise_std · peak)²`.
pub fn simulate_acquisition(
    image: &KTVolume,
    maps: &CoilMaps,
    mask: &SamplingMask,
    noise_std: f64,
    seed: u64,
) -> Result<KTVolume> {
    require_domain(image.domain(), Domain::Image)?;
    if image.is_multicoil() {
        return Err(Error::Axis("expected a coil-combined (FE, PE, TIME) image".into()));
    }
    if image.n_pe() != mask.n_pe() || image.n_time() != mask.n_time() {
        return Err(Error::Shape(format!(
            "image PE={} TIME={} vs mask {}x{}",
            image.n_pe(),
            image.n_time(),
            mask.n_pe(),
            mask.n_time()
        )));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::Config("noise_std must be >= 0".into()));
    }
    let coil = coil_expand(image.tensor(), maps)?;
    let ext = coil.extents().to_vec();
    let labels = coil.labels().to_vec();
    let mut k = coil.into_data();
    transform_axis(&mut k, &ext, 0, Direction::Forward);
    transform_axis(&mut k, &ext, 1, Direction::Forward);
    if noise_std > 0.0 {
        let peak = k.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let sigma = noise_std * peak / std::f64::consts::SQRT_2;
        let mut r = rng(seed);
        let (n, j, t) = (ext[1], ext[2], ext[3]);
        for (i, v) in k.iter_mut().enumerate() {
            let p = (i / (j * t)) % n;
            let f = i % t;
            if mask.is_sampled(p, f) {
                let re: f64 = StandardNormal.sample(&mut r);
                let im: f64 = StandardNormal.sample(&mut r);
                *v += C64::new(re * sigma, im * sigma);
            }
        }
    }
    let full = ComplexTensor::new(ext, labels, k)?;
    KTVolume::new(apply_mask(&full, mask)?, Domain::KSpace)
}
