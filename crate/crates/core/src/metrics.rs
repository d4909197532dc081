//! Image-quality metrics: RLNE on complex data, PSNR and SSIM on magnitudes.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{require_domain, Domain, KTVolume, C64};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_pair(a: &KTVolume, b: &KTVolume) -> Result<()> {
    if a.tensor().extents() != b.tensor().extents() {
        return Err(Error::Shape(format!(
            "reconstruction {:?} and reference {:?} differ",
            a.tensor().extents(),
            b.tensor().extents()
        )));
    }
    Ok(())
}

/// `‖x̂ − x‖ / ‖x‖` over all complex entries.
pub fn rlne(x_hat: &KTVolume, x_ref: &KTVolume) -> Result<f64> {
    check_pair(x_hat, x_ref)?;
    rlne_raw(x_hat.data(), x_ref.data())
}

fn rlne_raw(a: &[C64], r: &[C64]) -> Result<f64> {
    let den: f64 = r.iter().map(|v| v.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::Config("RLNE reference is all zero".into()));
    }
    let num: f64 = a.iter().zip(r).map(|(x, y)| (x - y).norm_sqr()).sum();
    Ok((num / den).sqrt())
}

fn peak(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn psnr_mag(a: &[C64], r: &[C64], peak: f64) -> f64 {
    let mse = a.iter().zip(r).map(|(x, y)| (x.norm() - y.norm()).powi(2)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

/// `10·log10(peak² / MSE)` on magnitudes, peak = reference maximum; identical inputs give `+inf`.
pub fn psnr(x_hat: &KTVolume, x_ref: &KTVolume) -> Result<f64> {
    check_pair(x_hat, x_ref)?;
    Ok(psnr_mag(x_hat.data(), x_ref.data(), peak(x_ref.data())))
}

fn gaussian(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let w: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Mean SSIM of one magnitude frame over all valid window positions.
/// Returns the value and the window size actually used.
pub fn ssim_frame(a: &[f64], r: &[f64], h: usize, w: usize, l: f64) -> (f64, usize) {
    let win = SSIM_WINDOW.min(h).min(w);
    let g = gaussian(win, SSIM_SIGMA);
    let c1 = (SSIM_K1 * l).powi(2);
    let c2 = (SSIM_K2 * l).powi(2);
    let mut total = 0.0;
    let mut count = 0usize;
    for i0 in 0..=h - win {
        for j0 in 0..=w - win {
            let (mut ma, mut mr, mut saa, mut srr, mut sar) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for di in 0..win {
                for dj in 0..win {
                    let wt = g[di] * g[dj];
                    let idx = (i0 + di) * w + j0 + dj;
                    let (x, y) = (a[idx], r[idx]);
                    ma += wt * x;
                    mr += wt * y;
                    saa += wt * x * x;
                    srr += wt * y * y;
                    sar += wt * x * y;
                }
            }
            let va = saa - ma * ma;
            let vr = srr - mr * mr;
            let cov = sar - ma * mr;
            total += ((2.0 * ma * mr + c1) * (2.0 * cov + c2)) / ((ma * ma + mr * mr + c1) * (va + vr + c2));
            count += 1;
        }
    }
    (total / count as f64, win)
}

fn frame_mag(v: &KTVolume, f: usize) -> Vec<f64> {
    let t = v.n_time();
    v.data().iter().skip(f).step_by(t).map(|z| z.norm()).collect()
}

fn frame_complex(v: &KTVolume, f: usize) -> Vec<C64> {
    let t = v.n_time();
    v.data().iter().skip(f).step_by(t).copied().collect()
}

fn require_image(v: &KTVolume) -> Result<()> {
    require_domain(v.domain(), Domain::Image)?;
    if v.is_multicoil() {
        return Err(Error::Axis("metrics need coil-combined (FE, PE, TIME) images".into()));
    }
    Ok(())
}

/// Per-frame (FE × PE) SSIM averaged over frames; L is the reference peak magnitude.
pub fn ssim(x_hat: &KTVolume, x_ref: &KTVolume) -> Result<f64> {
    check_pair(x_hat, x_ref)?;
    require_image(x_ref)?;
    let frames = ssim_frames(x_hat, x_ref);
    Ok(frames.0.iter().sum::<f64>() / frames.0.len() as f64)
}

fn ssim_frames(x_hat: &KTVolume, x_ref: &KTVolume) -> (Vec<f64>, usize) {
    let l = peak(x_ref.data());
    let (h, w) = (x_ref.n_fe(), x_ref.n_pe());
    let mut win = SSIM_WINDOW;
    let vals = (0..x_ref.n_time())
        .map(|f| {
            let (s, used) = ssim_frame(&frame_mag(x_hat, f), &frame_mag(x_ref, f), h, w, l);
            win = used;
            s
        })
        .collect();
    (vals, win)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub rlne: f64,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricReport {
    pub reference_id: String,
    pub reconstruction_id: String,
    pub mask: String,
    pub rlne: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    /// Reference peak magnitude used by PSNR and SSIM.
    pub peak: f64,
    pub ssim_window: usize,
    pub frames: Vec<FrameMetrics>,
}

/// Whole-volume metrics plus per-frame breakdowns (per-frame PSNR uses the volume peak).
pub fn evaluate(x_hat: &KTVolume, x_ref: &KTVolume, reference_id: &str, reconstruction_id: &str, mask: &str) -> Result<MetricReport> {
    check_pair(x_hat, x_ref)?;
    require_image(x_hat)?;
    require_image(x_ref)?;
    let pk = peak(x_ref.data());
    let (ssims, window) = ssim_frames(x_hat, x_ref);
    let frames = (0..x_ref.n_time())
        .map(|f| {
            let (a, r) = (frame_complex(x_hat, f), frame_complex(x_ref, f));
            Ok(FrameMetrics { frame: f, rlne: rlne_raw(&a, &r).unwrap_or(f64::NAN), psnr_db: psnr_mag(&a, &r, pk), ssim: ssims[f] })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport {
        reference_id: reference_id.into(),
        reconstruction_id: reconstruction_id.into(),
        mask: mask.into(),
        rlne: rlne(x_hat, x_ref)?,
        psnr_db: psnr(x_hat, x_ref)?,
        ssim: ssims.iter().sum::<f64>() / ssims.len() as f64,
        peak: pk,
        ssim_window: window,
        frames,
    })
}

/// Formats a float for reports; infinities are written as `inf`.
pub fn fmt_metric(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.10e}")
    }
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "reference,reconstruction,mask,scope,frame,rlne,psnr_db,ssim";

    /// One `volume` row followed by one row per frame.
    pub fn to_csv(&self) -> String {
        let mut s = format!("{}\n", Self::CSV_HEADER);
        let mut row = |scope: &str, frame: String, r: f64, p: f64, q: f64| {
            writeln!(
                s,
                "{},{},{},{scope},{frame},{},{},{}",
                self.reference_id,
                self.reconstruction_id,
                self.mask,
                fmt_metric(r),
                fmt_metric(p),
                fmt_metric(q)
            )
            .unwrap();
        };
        row("volume", String::new(), self.rlne, self.psnr_db, self.ssim);
        for f in &self.frames {
            row("frame", f.frame.to_string(), f.rlne, f.psnr_db, f.ssim);
        }
        s
    }

    /// JSON with infinities encoded as the strings `"inf"` / `"-inf"`.
    pub fn to_json(&self) -> Result<String> {
        let fix = |v: f64| -> serde_json::Value {
            if v.is_finite() {
                serde_json::json!(v)
            } else {
                serde_json::json!(fmt_metric(v))
            }
        };
        let frames: Vec<_> = self
            .frames
            .iter()
            .map(|f| serde_json::json!({"frame": f.frame, "rlne": fix(f.rlne), "psnr_db": fix(f.psnr_db), "ssim": fix(f.ssim)}))
            .collect();
        let v = serde_json::json!({
            "reference_id": self.reference_id,
            "reconstruction_id": self.reconstruction_id,
            "mask": self.mask,
            "rlne": fix(self.rlne),
            "psnr_db": fix(self.psnr_db),
            "ssim": fix(self.ssim),
            "peak": self.peak,
            "ssim_window": self.ssim_window,
            "frames": frames,
        });
        Ok(serde_json::to_string_pretty(&v)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vol(m: usize, n: usize, t: usize, f: impl Fn(usize) -> C64) -> KTVolume {
        KTVolume::image(m, n, t, (0..m * n * t).map(f).collect()).unwrap()
    }

    #[test]
    fn rlne_examples() {
        let r = vol(3, 4, 2, |i| C64::new(i as f64 - 5.0, 1.0));
        assert_eq!(rlne(&r, &r).unwrap(), 0.0);
        assert!((rlne(&vol(3, 4, 2, |_| C64::new(0.0, 0.0)), &r).unwrap() - 1.0).abs() < 1e-15);
        let twice = vol(3, 4, 2, |i| C64::new(i as f64 - 5.0, 1.0) * 2.0);
        assert!((rlne(&twice, &r).unwrap() - 1.0).abs() < 1e-15);
        assert!(rlne(&r, &vol(3, 4, 2, |_| C64::new(0.0, 0.0))).is_err());
    }

    #[test]
    fn psnr_examples() {
        let r = vol(2, 2, 1, |_| C64::new(1.0, 0.0));
        let x = vol(2, 2, 1, |i| C64::new(if i == 3 { 0.9 } else { 1.0 }, 0.0));
        assert!((psnr(&x, &r).unwrap() - 10.0 * (1.0f64 / 0.0025).log10()).abs() < 1e-12);
        assert!((psnr(&x, &r).unwrap() - 26.0206).abs() < 1e-4);
        assert_eq!(psnr(&r, &r).unwrap(), f64::INFINITY);
        // MSE = peak²
        let z = vol(2, 2, 1, |_| C64::new(0.0, 0.0));
        assert!(psnr(&z, &r).unwrap().abs() < 1e-12);
        let s = |v: &KTVolume| vol(2, 2, 1, |i| v.data()[i] * 3.5);
        assert!((psnr(&s(&x), &s(&r)).unwrap() - psnr(&x, &r).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ssim_examples() {
        let r = vol(16, 14, 2, |i| C64::new(((i * 7919) % 13) as f64, 0.5));
        assert!((ssim(&r, &r).unwrap() - 1.0).abs() < 1e-12);
        let neg = vol(16, 14, 2, |i| -r.data()[i]);
        assert!((ssim(&neg, &r).unwrap() - 1.0).abs() < 1e-12);
        // constant images: variances vanish, SSIM = (2ab + C1)/(a² + b² + C1)
        let a = vol(12, 12, 1, |_| C64::new(1.0, 0.0));
        let b = vol(12, 12, 1, |_| C64::new(0.5, 0.0));
        let c1 = (0.01f64 * 1.0).powi(2);
        let want = (2.0 * 0.5 + c1) / (1.0 + 0.25 + c1);
        assert!((ssim(&b, &a).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn small_frames_clamp_window() {
        let r = vol(6, 8, 1, |i| C64::new(i as f64, 0.0));
        let rep = evaluate(&r, &r, "r", "r", "none").unwrap();
        assert_eq!(rep.ssim_window, 6);
        assert!((rep.ssim - 1.0).abs() < 1e-12);
    }

    #[test]
    fn volume_is_mean_of_frame_ssim_and_reports_serialize() {
        let r = vol(12, 12, 3, |i| C64::new(((i * 31) % 17) as f64, 0.0));
        let x = vol(12, 12, 3, |i| C64::new(((i * 31) % 17) as f64 + ((i % 5) as f64) * 0.3, 0.0));
        let rep = evaluate(&x, &r, "ref", "rec", "RANDOM_KT").unwrap();
        let mean = rep.frames.iter().map(|f| f.ssim).sum::<f64>() / 3.0;
        assert!((rep.ssim - mean).abs() < 1e-15);
        // per-frame MSE aggregates to the volume MSE with equal frame sizes
        let mse = |p: f64| rep.peak * rep.peak / 10f64.powf(p / 10.0);
        let avg = rep.frames.iter().map(|f| mse(f.psnr_db)).sum::<f64>() / 3.0;
        assert!((avg - mse(rep.psnr_db)).abs() < 1e-9 * avg);
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.lines().nth(1).unwrap().starts_with("ref,rec,RANDOM_KT,volume,,"));
        let ident = evaluate(&r, &r, "a", "b", "m").unwrap();
        let js: serde_json::Value = serde_json::from_str(&ident.to_json().unwrap()).unwrap();
        assert_eq!(js["psnr_db"], "inf");
        assert_eq!(js["rlne"], 0.0);
    }
}
