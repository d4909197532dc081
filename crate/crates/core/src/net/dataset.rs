//! Row-wise training pairs from fully sampled volumes.

use crate::error::{Error, Result};
use crate::operators::{apply_mask, hybridize, zero_filled, CoilMaps, SamplingMask};
use crate::phantom::simulate_acquisition;
use crate::seed::derive_seed;
use crate::tensor::{split_rows, Domain, KTSlice2D, KTVolume};

/// One FE row: undersampled hybrid k-t input, coil-combined image label and the row's maps.
#[derive(Clone, Debug)]
pub struct Sample {
    pub input: KTSlice2D,
    pub label: KTSlice2D,
    pub maps: CoilMaps,
    pub volume: usize,
}

#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub samples: Vec<Sample>,
    pub mask: SamplingMask,
}

impl TrainingSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn n_pe(&self) -> usize {
        self.mask.n_pe()
    }

    pub fn n_time(&self) -> usize {
        self.mask.n_time()
    }
}

/// Builds one sample per FE row of every volume.
///
/// Image volumes are acquired through [`simulate_acquisition`] with
/// `noise_std` and a per-volume seed; fully sampled multi-coil KSPACE volumes
/// are masked directly and labelled with their full-data adjoint image.
pub fn build_training_set(
    volumes: &[KTVolume],
    maps: &[CoilMaps],
    mask: &SamplingMask,
    noise_std: f64,
    seed: u64,
) -> Result<TrainingSet> {
    if volumes.len() != maps.len() {
        return Err(Error::Shape(format!("{} volumes but {} coil map sets", volumes.len(), maps.len())));
    }
    let mut samples = Vec::new();
    for (v, (vol, vmaps)) in volumes.iter().zip(maps).enumerate() {
        if vol.n_pe() != mask.n_pe() || vol.n_time() != mask.n_time() {
            return Err(Error::Shape(format!(
                "volume {v} has PE={} TIME={}, mask is {}x{}",
                vol.n_pe(),
                vol.n_time(),
                mask.n_pe(),
                mask.n_time()
            )));
        }
        if vmaps.n_fe() != Some(vol.n_fe()) {
            return Err(Error::Shape(format!("coil maps of volume {v} do not cover {} FE rows", vol.n_fe())));
        }
        let (y, label) = match vol.domain() {
            Domain::Image if !vol.is_multicoil() => {
                let y = simulate_acquisition(vol, vmaps, mask, noise_std, derive_seed(seed, &format!("noise{v}")))?;
                (y, vol.clone())
            }
            Domain::KSpace if vol.is_multicoil() => {
                let full = SamplingMask::full(vol.n_pe(), vol.n_time());
                let label = zero_filled(vol, vmaps, &full)?;
                let y = KTVolume::new(apply_mask(vol.tensor(), mask)?, Domain::KSpace)?;
                (y, label)
            }
            _ => {
                return Err(Error::Domain {
                    expected: "coil-combined IMAGE or multi-coil KSPACE".into(),
                    found: vol.domain().to_string(),
                })
            }
        };
        let inputs = split_rows(&hybridize(&y)?)?;
        let labels = split_rows(&label)?;
        for (input, label) in inputs.into_iter().zip(labels) {
            let maps = vmaps.row(input.row())?;
            samples.push(Sample { input, label, maps, volume: v });
        }
    }
    Ok(TrainingSet { samples, mask: mask.clone() })
}

/// Samples available to row-wise learning: cases × slices × FE rows.
pub fn separable_sample_count(cases: usize, slices: usize, n_fe: usize) -> usize {
    cases * slices * n_fe
}

/// Samples available when every slice is one training example.
pub fn direct_sample_count(cases: usize, slices: usize) -> usize {
    cases * slices
}
