//! Classical variable-splitting reconstruction of one (PE, TIME) row.
//!
//! Each iteration runs three updates on the current image `x`:
//!
//! 1. `b`: temporal signals pushed toward a fixed rank-r subspace estimated
//!    once from the zero-filled image (`I − V Vᴴ` plays the null-space filter);
//! 2. `d`: per-frame soft-thresholding in a spatial sparsifying transform;
//! 3. `x`: data-consistent blend of `b` and `d` in coil k-space.

mod sparse;
mod subspace;

use serde::{Deserialize, Serialize};

pub use sparse::{d_update, soft, SparseTransform};
pub use subspace::{b_update, estimate_temporal_subspace, BUpdateMode, TemporalProjector};

use crate::dc::data_consistency;
use crate::error::{Error, Result};
use crate::operators::{hybridize, CoilMaps, SamplingMask, SliceEncoder};
use crate::parallel::map_rows;
use crate::tensor::{split_rows, stitch_rows, KTSlice2D, KTVolume, C64};

fn default_lambda1() -> f64 {
    0.05
}
fn default_lambda2() -> f64 {
    0.01
}
fn default_mu() -> f64 {
    1.0
}
fn default_iterations() -> usize {
    50
}
fn default_rank() -> usize {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicalConfig {
    #[serde(default = "default_lambda1")]
    pub lambda1: f64,
    #[serde(default = "default_lambda2")]
    pub lambda2: f64,
    #[serde(default = "default_mu")]
    pub mu1: f64,
    #[serde(default = "default_mu")]
    pub mu2: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_rank")]
    pub rank: usize,
    #[serde(default)]
    pub transform: SparseTransform,
    #[serde(default)]
    pub b_mode: BUpdateMode,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        Self {
            lambda1: default_lambda1(),
            lambda2: default_lambda2(),
            mu1: default_mu(),
            mu2: default_mu(),
            iterations: default_iterations(),
            rank: default_rank(),
            transform: SparseTransform::default(),
            b_mode: BUpdateMode::default(),
        }
    }
}

impl ClassicalConfig {
    pub fn validate(&self, n_pe: usize, n_time: usize) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::Config("lambda1 and lambda2 must be >= 0".into()));
        }
        if !(self.mu1 > 0.0 && self.mu2 > 0.0) {
            return Err(Error::Config("mu1 and mu2 must be > 0".into()));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be positive".into()));
        }
        if self.rank < 1 || self.rank >= n_time {
            return Err(Error::Config(format!("rank {} must satisfy 1 <= r < T = {n_time}", self.rank)));
        }
        if 2.0 * self.lambda1 / self.mu1 > 1.0 {
            return Err(Error::Config(format!(
                "2*lambda1/mu1 = {} exceeds 1",
                2.0 * self.lambda1 / self.mu1
            )));
        }
        self.transform.check_len(n_pe)
    }
}

/// Data-consistency x-update for one row (see [`crate::dc`]).
pub fn x_update(
    z: &KTSlice2D,
    b: &[C64],
    d: &[C64],
    maps: &CoilMaps,
    mask: &SamplingMask,
    mu1: f64,
    mu2: f64,
) -> Result<KTSlice2D> {
    let enc = SliceEncoder::new(maps, mask)?;
    let x = data_consistency(&enc, z.data(), b, d, mu1, mu2)?;
    KTSlice2D::image(enc.n_pe, enc.n_time, x, z.row())
}

/// Reconstructs one row from its hybrid k-t data.
pub fn solve_classical(z: &KTSlice2D, maps: &CoilMaps, mask: &SamplingMask, cfg: &ClassicalConfig) -> Result<KTSlice2D> {
    let enc = SliceEncoder::new(maps, mask)?;
    if z.tensor().extents() != [enc.n_pe, enc.n_coils, enc.n_time] {
        return Err(Error::Shape(format!(
            "k-t slice {:?} does not match maps/mask [{}, {}, {}]",
            z.tensor().extents(),
            enc.n_pe,
            enc.n_coils,
            enc.n_time
        )));
    }
    cfg.validate(enc.n_pe, enc.n_time)?;
    let (n, t) = (enc.n_pe, enc.n_time);
    let x0 = KTSlice2D::image(n, t, enc.adjoint(z.data()), z.row())?;
    let proj = estimate_temporal_subspace(&x0, cfg.rank)?;
    let mut x = x0.into_data();
    for _ in 0..cfg.iterations {
        let b = b_update(&x, &proj, cfg.lambda1, cfg.mu1, cfg.b_mode);
        let d = d_update(&x, n, t, cfg.transform, cfg.lambda2, cfg.mu2)?;
        x = data_consistency(&enc, z.data(), &b, &d, cfg.mu1, cfg.mu2)?;
    }
    KTSlice2D::image(n, t, x, z.row())
}

/// Whole-volume driver: hybridize, solve each FE row independently, stitch.
pub fn solve_classical_volume(
    y: &KTVolume,
    maps: &CoilMaps,
    mask: &SamplingMask,
    cfg: &ClassicalConfig,
    threads: usize,
) -> Result<KTVolume> {
    let rows = split_rows(&hybridize(y)?)?;
    let out = map_rows(&rows, threads, |r| solve_classical(r, &maps.row(r.row())?, mask, cfg))?;
    stitch_rows(&out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::{gen_coil_maps, gen_phantom, simulate_acquisition, PhantomSpec};
    use crate::sampling::{generate, MaskSpec, PatternKind};

    #[test]
    fn config_invariants() {
        let mut cfg = ClassicalConfig::default();
        assert!(cfg.validate(32, 8).is_ok());
        cfg.lambda1 = 0.6;
        assert!(cfg.validate(32, 8).is_err());
        let cfg = ClassicalConfig { rank: 8, ..Default::default() };
        assert!(cfg.validate(32, 8).is_err());
        assert!(ClassicalConfig::default().validate(30, 8).is_err());
        let cfg = ClassicalConfig { transform: SparseTransform::Diff1d, ..Default::default() };
        assert!(cfg.validate(30, 8).is_ok());
    }

    #[test]
    fn full_sampling_one_iteration_recovers_truth() {
        let spec = PhantomSpec::desk(4, 8, 4, 2, 3);
        let x = gen_phantom(&spec).unwrap();
        let maps = gen_coil_maps(4, 8, 2, 1).unwrap();
        let mask = SamplingMask::full(8, 4);
        let y = simulate_acquisition(&x, &maps, &mask, 0.0, 0).unwrap();
        let cfg = ClassicalConfig { lambda1: 0.0, lambda2: 0.0, iterations: 1, ..Default::default() };
        let rec = solve_classical_volume(&y, &maps, &mask, &cfg, 1).unwrap();
        for (a, b) in rec.data().iter().zip(x.data()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn deterministic_and_thread_independent() {
        let spec = PhantomSpec::desk(6, 16, 6, 2, 5);
        let x = gen_phantom(&spec).unwrap();
        let maps = gen_coil_maps(6, 16, 2, 1).unwrap();
        let mask = generate(&MaskSpec::new(16, 6, 4.0, PatternKind::RandomKt, 2)).unwrap();
        let y = simulate_acquisition(&x, &maps, &mask, 0.0, 0).unwrap();
        let cfg = ClassicalConfig { iterations: 5, ..Default::default() };
        let a = solve_classical_volume(&y, &maps, &mask, &cfg, 1).unwrap();
        let b = solve_classical_volume(&y, &maps, &mask, &cfg, 1).unwrap();
        let c = solve_classical_volume(&y, &maps, &mask, &cfg, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }
}
