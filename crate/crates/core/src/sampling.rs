//! k-t undersampling patterns.
//!
//! Both generators sample exactly `round(n_pe / af)` PE lines per frame and
//! always include the `n_center` central lines.
//!
//! `VISTA_LIKE` approximates a variable-density incoherent pattern: each frame
//! places its remaining lines at stratified quantiles of the density
//! `p(k) ∝ (1 + |k - k_c| / σ)^(-d)`, with the strata shifted by a
//! golden-ratio increment from frame to frame. Collisions move to the nearest
//! free line. It is not the PSF-optimized VISTA algorithm.

use std::path::Path;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ktb;
use crate::operators::SamplingMask;
use crate::seed::{rng, rng_stream};
use crate::tensor::{AxisLabel, BoolTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PatternKind {
    RandomKt,
    VistaLike,
    Custom,
}

impl std::fmt::Display for PatternKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PatternKind::RandomKt => "RANDOM_KT",
            PatternKind::VistaLike => "VISTA_LIKE",
            PatternKind::Custom => "CUSTOM",
        })
    }
}

/// Mask metadata; serialized as the JSON sidecar of a mask file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskMeta {
    pub pattern: PatternKind,
    pub af: f64,
    pub seed: u64,
    pub n_center: usize,
}

pub const DEFAULT_VISTA_SIGMA_FRAC: f64 = 0.125;
pub const DEFAULT_VISTA_DECAY: f64 = 1.5;

fn default_sigma_frac() -> f64 {
    DEFAULT_VISTA_SIGMA_FRAC
}

fn default_decay() -> f64 {
    DEFAULT_VISTA_DECAY
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSpec {
    pub n_pe: usize,
    pub n_time: usize,
    pub af: f64,
    pub pattern: PatternKind,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to `max(1, round(n_pe / 48))`.
    #[serde(default)]
    pub n_center: Option<usize>,
    /// VISTA_LIKE density width σ as a fraction of `n_pe`.
    #[serde(default = "default_sigma_frac")]
    pub sigma_frac: f64,
    /// VISTA_LIKE density decay exponent `d`.
    #[serde(default = "default_decay")]
    pub decay: f64,
}

impl MaskSpec {
    pub fn new(n_pe: usize, n_time: usize, af: f64, pattern: PatternKind, seed: u64) -> Self {
        Self {
            n_pe,
            n_time,
            af,
            pattern,
            seed,
            n_center: None,
            sigma_frac: DEFAULT_VISTA_SIGMA_FRAC,
            decay: DEFAULT_VISTA_DECAY,
        }
    }

    pub fn with_center(mut self, n_center: usize) -> Self {
        self.n_center = Some(n_center);
        self
    }

    pub fn center_lines(&self) -> usize {
        self.n_center
            .unwrap_or_else(|| ((self.n_pe as f64 / 48.0).round() as usize).max(1))
    }

    /// Lines sampled per frame.
    pub fn budget(&self) -> usize {
        (self.n_pe as f64 / self.af).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_pe == 0 || self.n_time == 0 {
            return Err(Error::Config("mask extents must be positive".into()));
        }
        if !(self.af >= 1.0) || !self.af.is_finite() {
            return Err(Error::Config(format!("acceleration factor {} must be >= 1", self.af)));
        }
        let nc = self.center_lines();
        let budget = self.budget();
        if nc < 1 {
            return Err(Error::Config("n_center must be at least 1".into()));
        }
        if budget < nc || ((self.n_pe as f64 / self.af).floor() as usize) < nc {
            return Err(Error::Config(format!(
                "line budget {budget} cannot hold {nc} center lines (n_pe={}, af={})",
                self.n_pe, self.af
            )));
        }
        if self.pattern == PatternKind::Custom {
            return Err(Error::Config("CUSTOM masks are not generated".into()));
        }
        if self.pattern == PatternKind::VistaLike && !(self.sigma_frac > 0.0 && self.decay >= 0.0) {
            return Err(Error::Config("VISTA_LIKE needs sigma_frac > 0 and decay >= 0".into()));
        }
        Ok(())
    }

    fn meta(&self) -> MaskMeta {
        MaskMeta { pattern: self.pattern, af: self.af, seed: self.seed, n_center: self.center_lines() }
    }
}

fn center_range(n_pe: usize, n_center: usize) -> std::ops::Range<usize> {
    let start = n_pe / 2 - n_center / 2;
    start..start + n_center
}

fn assemble(spec: &MaskSpec, frames: Vec<Vec<bool>>) -> Result<SamplingMask> {
    let (n, t) = (spec.n_pe, spec.n_time);
    let mut data = vec![false; n * t];
    for (f, lines) in frames.iter().enumerate() {
        for (p, &on) in lines.iter().enumerate() {
            data[p * t + f] = on;
        }
    }
    let tensor = BoolTensor::new(vec![n, t], vec![AxisLabel::Pe, AxisLabel::Time], data)?;
    SamplingMask::new(tensor, spec.meta())
}

/// Center lines plus uniformly drawn lines, independently per frame.
pub fn gen_random_kt(spec: &MaskSpec) -> Result<SamplingMask> {
    spec.validate()?;
    let n = spec.n_pe;
    let nc = spec.center_lines();
    let extra = spec.budget() - nc;
    let center = center_range(n, nc);
    let frames = (0..spec.n_time)
        .map(|f| {
            let mut r = rng_stream(spec.seed, f as u64);
            let mut pool: Vec<usize> = (0..n).filter(|p| !center.contains(p)).collect();
            // partial Fisher-Yates
            for i in 0..extra {
                let k = i + r.random_range(0..(pool.len() - i) as u64) as usize;
                pool.swap(i, k);
            }
            let mut lines = vec![false; n];
            center.clone().for_each(|p| lines[p] = true);
            pool[..extra].iter().for_each(|&p| lines[p] = true);
            lines
        })
        .collect();
    assemble(spec, frames)
}

/// Variable-density pattern with golden-ratio stratum offsets across frames.
pub fn gen_vista_like(spec: &MaskSpec) -> Result<SamplingMask> {
    spec.validate()?;
    let n = spec.n_pe;
    let nc = spec.center_lines();
    let extra = spec.budget() - nc;
    let center = center_range(n, nc);
    let kc = (n / 2) as f64;
    let sigma = spec.sigma_frac * n as f64;
    let candidates: Vec<usize> = (0..n).filter(|p| !center.contains(p)).collect();
    let weights: Vec<f64> = candidates
        .iter()
        .map(|&p| (1.0 + (p as f64 - kc).abs() / sigma).powf(-spec.decay))
        .collect();
    let total: f64 = weights.iter().sum();
    let cdf: Vec<f64> = weights
        .iter()
        .scan(0.0, |acc, w| {
            *acc += w / total;
            Some(*acc)
        })
        .collect();
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let start: f64 = rng(spec.seed).random();
    let frames = (0..spec.n_time)
        .map(|f| {
            let mut lines = vec![false; n];
            center.clone().for_each(|p| lines[p] = true);
            let phase = (start + f as f64 * golden).fract();
            let mut taken = vec![false; candidates.len()];
            for i in 0..extra {
                let u = (i as f64 + phase) / extra as f64;
                let pick = cdf.partition_point(|&c| c < u).min(candidates.len() - 1);
                let slot = nearest_free(&taken, pick);
                taken[slot] = true;
                lines[candidates[slot]] = true;
            }
            lines
        })
        .collect();
    assemble(spec, frames)
}

fn nearest_free(taken: &[bool], at: usize) -> usize {
    if !taken[at] {
        return at;
    }
    for d in 1..taken.len() {
        if at >= d && !taken[at - d] {
            return at - d;
        }
        if at + d < taken.len() && !taken[at + d] {
            return at + d;
        }
    }
    unreachable!("budget never exceeds candidate count")
}

pub fn generate(spec: &MaskSpec) -> Result<SamplingMask> {
    match spec.pattern {
        PatternKind::RandomKt => gen_random_kt(spec),
        PatternKind::VistaLike => gen_vista_like(spec),
        PatternKind::Custom => Err(Error::Config("CUSTOM masks are not generated".into())),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskAudit {
    pub realized_af: f64,
    pub per_frame_counts: Vec<usize>,
    pub temporal_overlap_fraction: f64,
}

pub fn audit_mask(mask: &SamplingMask) -> MaskAudit {
    let (n, t) = (mask.n_pe(), mask.n_time());
    let per_frame_counts: Vec<usize> = (0..t).map(|f| (0..n).filter(|&p| mask.is_sampled(p, f)).count()).collect();
    let total: usize = per_frame_counts.iter().sum();
    let temporal_overlap_fraction = if t < 2 {
        1.0
    } else {
        (0..t - 1)
            .map(|f| {
                let both = (0..n).filter(|&p| mask.is_sampled(p, f) && mask.is_sampled(p, f + 1)).count();
                both as f64 / per_frame_counts[f] as f64
            })
            .sum::<f64>()
            / (t - 1) as f64
    };
    MaskAudit { realized_af: (n * t) as f64 / total as f64, per_frame_counts, temporal_overlap_fraction }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Writes the mask as a boolean KTB file plus a `<path>.json` metadata sidecar.
pub fn save_mask(mask: &SamplingMask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    ktb::save_bool(mask.tensor(), path)?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(mask.meta())?;
    std::fs::write(&side, json).map_err(|e| Error::io(side, e))
}

/// Reads a mask; a missing sidecar yields CUSTOM metadata.
pub fn load_mask(path: impl AsRef<Path>) -> Result<SamplingMask> {
    let path = path.as_ref();
    let tensor = ktb::load_bool(path)?;
    let side = sidecar_path(path);
    match std::fs::read_to_string(&side) {
        Ok(s) => SamplingMask::new(tensor, serde_json::from_str(&s)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let (n, t) = (tensor.extents()[0], tensor.extents()[1]);
            SamplingMask::from_bools(n, t, tensor.data().to_vec())
        }
        Err(e) => Err(Error::io(side, e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_budget_arithmetic() {
        let spec = MaskSpec::new(8, 5, 4.0, PatternKind::RandomKt, 3).with_center(1);
        let m = gen_random_kt(&spec).unwrap();
        let a = audit_mask(&m);
        assert_eq!(a.per_frame_counts, vec![2; 5]);
        assert!((0..5).all(|f| m.is_sampled(4, f)));
    }

    #[test]
    fn af_one_is_full() {
        for pattern in [PatternKind::RandomKt, PatternKind::VistaLike] {
            let m = generate(&MaskSpec::new(10, 3, 1.0, pattern, 9)).unwrap();
            assert!(m.data().iter().all(|&b| b));
            let a = audit_mask(&m);
            assert_eq!(a.realized_af, 1.0);
            assert_eq!(a.temporal_overlap_fraction, 1.0);
        }
    }

    #[test]
    fn vista_arithmetic() {
        let spec = MaskSpec::new(24, 12, 8.0, PatternKind::VistaLike, 1).with_center(1);
        let m = gen_vista_like(&spec).unwrap();
        assert_eq!(m.tensor().count(), 36);
        assert!(audit_mask(&m).per_frame_counts.iter().all(|&c| c == 3));
    }

    #[test]
    fn vista_union_exceeds_single_frame() {
        let spec = MaskSpec::new(32, 8, 4.0, PatternKind::VistaLike, 5);
        let m = gen_vista_like(&spec).unwrap();
        let union = (0..32).filter(|&p| (0..8).any(|f| m.is_sampled(p, f))).count();
        assert!(union > spec.budget());
    }

    #[test]
    fn budget_below_center_rejected() {
        let spec = MaskSpec::new(8, 4, 8.0, PatternKind::RandomKt, 0).with_center(2);
        assert!(matches!(gen_random_kt(&spec), Err(Error::Config(_))));
        assert!(generate(&MaskSpec::new(8, 4, 0.5, PatternKind::RandomKt, 0)).is_err());
    }

    #[test]
    fn default_center_lines() {
        assert_eq!(MaskSpec::new(32, 8, 4.0, PatternKind::RandomKt, 0).center_lines(), 1);
        assert_eq!(MaskSpec::new(192, 8, 4.0, PatternKind::RandomKt, 0).center_lines(), 4);
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mask.ktb");
        let m = generate(&MaskSpec::new(16, 4, 4.0, PatternKind::VistaLike, 2)).unwrap();
        save_mask(&m, &p).unwrap();
        assert_eq!(load_mask(&p).unwrap(), m);
        std::fs::remove_file(dir.path().join("mask.ktb.json")).unwrap();
        assert_eq!(load_mask(&p).unwrap().data(), m.data());
    }
}
