//! 16-bit PGM output of magnitude frames, error maps and y-t profiles.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::{require_domain, Domain, KTVolume};

pub const ERROR_GAIN: f64 = 5.0;

/// Binary 16-bit PGM (`P5`, maxval 65535, big-endian samples), row-major `h × w`.
pub fn encode_pgm16(pixels: &[u16], w: usize, h: usize) -> Vec<u8> {
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for p in pixels {
        out.extend_from_slice(&p.to_be_bytes());
    }
    out
}

fn quantize(v: f64, scale: f64) -> u16 {
    if scale <= 0.0 {
        return 0;
    }
    (v / scale * 65535.0).round().clamp(0.0, 65535.0) as u16
}

fn write(path: PathBuf, pixels: &[u16], w: usize, h: usize) -> Result<PathBuf> {
    std::fs::write(&path, encode_pgm16(pixels, w, h)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Writes `frame_NNN.pgm` (FE rows × PE columns) for every frame and
/// `profile_peC.pgm` (FE rows × TIME columns) at PE column `profile_col`.
/// With a reference, also `error_NNN.pgm` and `error_profile_peC.pgm`
/// showing `ERROR_GAIN·|x − ref|` on the reference's display scale.
/// The maximum magnitude of `volume` maps to 65535.
pub fn emit_images(volume: &KTVolume, reference: Option<&KTVolume>, dir: &Path, profile_col: usize) -> Result<Vec<PathBuf>> {
    require_domain(volume.domain(), Domain::Image)?;
    if volume.is_multicoil() {
        return Err(Error::Axis("images need a coil-combined volume".into()));
    }
    if let Some(r) = reference {
        require_domain(r.domain(), Domain::Image)?;
        if r.tensor().extents() != volume.tensor().extents() {
            return Err(Error::Shape("reference extents differ from the volume".into()));
        }
    }
    let (m, n, t) = (volume.n_fe(), volume.n_pe(), volume.n_time());
    if profile_col >= n {
        return Err(Error::Config(format!("profile column {profile_col} outside 0..{n}")));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mag: Vec<f64> = volume.data().iter().map(|z| z.norm()).collect();
    let scale = mag.iter().copied().fold(0.0, f64::max);
    let err: Option<(Vec<f64>, f64)> = reference.map(|r| {
        let e = volume.data().iter().zip(r.data()).map(|(a, b)| ERROR_GAIN * (a - b).norm()).collect();
        (e, r.data().iter().map(|z| z.norm()).fold(0.0, f64::max))
    });
    let mut files = Vec::new();
    let frame = |vals: &[f64], s: f64, f: usize| -> Vec<u16> {
        (0..m * n).map(|i| quantize(vals[i * t + f], s)).collect()
    };
    let profile = |vals: &[f64], s: f64| -> Vec<u16> {
        (0..m).flat_map(|r| (0..t).map(move |f| (r, f))).map(|(r, f)| quantize(vals[(r * n + profile_col) * t + f], s)).collect()
    };
    for f in 0..t {
        files.push(write(dir.join(format!("frame_{f:03}.pgm")), &frame(&mag, scale, f), n, m)?);
        if let Some((e, s)) = &err {
            files.push(write(dir.join(format!("error_{f:03}.pgm")), &frame(e, *s, f), n, m)?);
        }
    }
    files.push(write(dir.join(format!("profile_pe{profile_col}.pgm")), &profile(&mag, scale), t, m)?);
    if let Some((e, s)) = &err {
        files.push(write(dir.join(format!("error_profile_pe{profile_col}.pgm")), &profile(e, *s), t, m)?);
    }
    Ok(files)
}
