//! Volume inference and FE-smoothing post-processing.

use serde::{Deserialize, Serialize};

use super::model::forward_raw;
use super::params::NetworkParams;
use crate::error::{Error, Result};
use crate::operators::{hybridize, CoilMaps, SamplingMask, SliceEncoder};
use crate::parallel::map_rows;
use crate::tensor::{require_domain, split_rows, stitch_rows, Domain, KTSlice2D, KTVolume, C64};

fn d_rounds() -> usize {
    10
}
fn d_weight() -> f64 {
    0.1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScConfig {
    #[serde(default = "d_rounds")]
    pub rounds: usize,
    #[serde(default = "d_weight")]
    pub weight: f64,
}

impl Default for ScConfig {
    fn default() -> Self {
        Self { rounds: d_rounds(), weight: d_weight() }
    }
}

/// Final-phase network output for every FE row, stitched back into a volume.
pub fn infer_volume(
    y: &KTVolume,
    maps: &CoilMaps,
    mask: &SamplingMask,
    params: &NetworkParams,
    sc: Option<&ScConfig>,
    threads: usize,
) -> Result<KTVolume> {
    let arch = &params.arch;
    if arch.n_pe.is_some_and(|n| n != y.n_pe()) || arch.n_time.is_some_and(|t| t != y.n_time()) {
        return Err(Error::Shape(format!(
            "network trained for PE={:?} TIME={:?}, volume has PE={} TIME={}",
            arch.n_pe,
            arch.n_time,
            y.n_pe(),
            y.n_time()
        )));
    }
    let rows = split_rows(&hybridize(y)?)?;
    let out = map_rows(&rows, threads, |r| {
        let m = maps.row(r.row())?;
        let enc = SliceEncoder::new(&m, mask)?;
        if r.data().len() != enc.kt_len() {
            return Err(Error::Shape("row does not match maps and mask".into()));
        }
        let mut fwd = forward_raw(&enc, r.data(), params)?;
        KTSlice2D::image(enc.n_pe, enc.n_time, fwd.xs.pop().unwrap(), r.row())
    })?;
    let x = stitch_rows(&out)?;
    match sc {
        Some(cfg) => sc_postprocess(&x, y, maps, mask, cfg.rounds, cfg.weight, threads),
        None => Ok(x),
    }
}

/// `x ← x − w·DᴴD x` along FE, D the forward difference with replicate boundary.
fn fe_smooth(x: &mut [C64], m: usize, stride: usize, w: f64) {
    if m < 2 {
        return;
    }
    let old = x.to_vec();
    for row in 0..m {
        for i in 0..stride {
            let c = old[row * stride + i];
            let mut lap = C64::new(0.0, 0.0);
            if row > 0 {
                lap += c - old[(row - 1) * stride + i];
            }
            if row + 1 < m {
                lap += c - old[(row + 1) * stride + i];
            }
            x[row * stride + i] = c - lap * w;
        }
    }
}

/// Alternates FE smoothing with a weighted data-consistency blend:
/// sampled coil k-space becomes `(z + w·k)/(1 + w)`, unsampled keeps `k`.
pub fn sc_postprocess(
    x: &KTVolume,
    y: &KTVolume,
    maps: &CoilMaps,
    mask: &SamplingMask,
    rounds: usize,
    weight: f64,
    threads: usize,
) -> Result<KTVolume> {
    require_domain(x.domain(), Domain::Image)?;
    if rounds == 0 || !(weight >= 0.0) {
        return Err(Error::Config("sc post-processing needs rounds >= 1 and weight >= 0".into()));
    }
    if weight * 4.0 >= 1.0 {
        return Err(Error::Config(format!("sc weight {weight} makes the smoothing step expansive (weight*4 >= 1)")));
    }
    if x.is_multicoil() || x.n_fe() != y.n_fe() || x.n_pe() != y.n_pe() || x.n_time() != y.n_time() {
        return Err(Error::Shape("image and k-space volumes differ in extents".into()));
    }
    let zrows = split_rows(&hybridize(y)?)?;
    let (m, stride) = (x.n_fe(), x.n_pe() * x.n_time());
    let mut data = x.data().to_vec();
    for _ in 0..rounds {
        fe_smooth(&mut data, m, stride, weight);
        let blended = map_rows(&zrows, threads, |z| {
            let rm = maps.row(z.row())?;
            let enc = SliceEncoder::new(&rm, mask)?;
            let row = &data[z.row() * stride..(z.row() + 1) * stride];
            let mut k = enc.to_coil_kspace(row);
            let (j, t) = (enc.n_coils, enc.n_time);
            for (i, kv) in k.iter_mut().enumerate() {
                let p = i / (j * t);
                let f = i % t;
                if enc.mask()[p * t + f] {
                    *kv = (z.data()[i] + *kv * weight) / (1.0 + weight);
                }
            }
            Ok(enc.from_coil_kspace(&k))
        })?;
        data = blended.concat();
    }
    KTVolume::image(m, x.n_pe(), x.n_time(), data)
}
