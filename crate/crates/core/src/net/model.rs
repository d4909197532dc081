//! Forward recursion, multi-phase loss and exact reverse-mode gradients.
//!
//! Per phase, with `x` the previous estimate:
//!
//! ```text
//! b = x − complex_of(N1(channels_of(x)))          along TIME, per PE position
//! d = complex_of(N3(soft(N2(channels_of(s)); θ)))  along PE, per frame
//! x' = dc(z, b, d; μ1, μ2)
//! ```
//!
//! where `s` is `x` or N1's output depending on [`SpatialInput`].

use super::params::{sigmoid, NetworkParams, PhaseParams, SpatialInput};
use crate::dc::{dc_backward, dc_forward, DcCache};
use crate::error::{Error, Result};
use crate::operators::{CoilMaps, SamplingMask, SliceEncoder};
use crate::tensor::{KTSlice2D, C64};

/// Real 2-channel view of a complex (PE, TIME) slice, laid out (CHANNEL, PE, TIME).
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSlice {
    pub channels: usize,
    pub n_pe: usize,
    pub n_time: usize,
    pub data: Vec<f64>,
}

pub fn channels_of(x: &KTSlice2D) -> Result<ChannelSlice> {
    if x.is_multicoil() {
        return Err(Error::Axis("channels_of needs a (PE, TIME) image slice".into()));
    }
    let (n, t) = (x.n_pe(), x.n_time());
    let mut data = vec![0.0; 2 * n * t];
    for (i, v) in x.data().iter().enumerate() {
        data[i] = v.re;
        data[n * t + i] = v.im;
    }
    Ok(ChannelSlice { channels: 2, n_pe: n, n_time: t, data })
}

pub fn complex_of(c: &ChannelSlice, row: usize) -> Result<KTSlice2D> {
    if c.channels != 2 {
        return Err(Error::Shape(format!("complex_of needs 2 channels, got {}", c.channels)));
    }
    let nt = c.n_pe * c.n_time;
    if c.data.len() != 2 * nt {
        return Err(Error::Shape("channel data length does not match extents".into()));
    }
    let data = (0..nt).map(|i| C64::new(c.data[i], c.data[nt + i])).collect();
    KTSlice2D::image(c.n_pe, c.n_time, data, row)
}

// Line layouts used by the convolution stacks.
// temporal: lines = PE, length = TIME; spatial: lines = TIME, length = PE.

fn to_time_lines(x: &[C64], n: usize, t: usize) -> Vec<f64> {
    let mut out = vec![0.0; 2 * n * t];
    for p in 0..n {
        for f in 0..t {
            let v = x[p * t + f];
            out[(p * 2) * t + f] = v.re;
            out[(p * 2 + 1) * t + f] = v.im;
        }
    }
    out
}

fn from_time_lines(c: &[f64], n: usize, t: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n * t];
    for p in 0..n {
        for f in 0..t {
            out[p * t + f] = C64::new(c[(p * 2) * t + f], c[(p * 2 + 1) * t + f]);
        }
    }
    out
}

fn to_pe_lines(x: &[C64], n: usize, t: usize) -> Vec<f64> {
    let mut out = vec![0.0; 2 * n * t];
    for p in 0..n {
        for f in 0..t {
            let v = x[p * t + f];
            out[(f * 2) * n + p] = v.re;
            out[(f * 2 + 1) * n + p] = v.im;
        }
    }
    out
}

fn from_pe_lines(c: &[f64], n: usize, t: usize) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); n * t];
    for p in 0..n {
        for f in 0..t {
            out[p * t + f] = C64::new(c[(f * 2) * n + p], c[(f * 2 + 1) * n + p]);
        }
    }
    out
}

fn soft_real(v: f64, theta: f64) -> f64 {
    if v > theta {
        v - theta
    } else if v < -theta {
        v + theta
    } else {
        0.0
    }
}

/// Residual temporal module: `x − N1(x)` applied along TIME.
pub fn temporal_module(x: &KTSlice2D, phase: &PhaseParams) -> Result<KTSlice2D> {
    let (n, t) = (x.n_pe(), x.n_time());
    let acts = phase.n1.forward(to_time_lines(x.data(), n, t), n, t);
    let n1 = from_time_lines(acts.last().unwrap(), n, t);
    let b = x.data().iter().zip(&n1).map(|(a, c)| a - c).collect();
    KTSlice2D::image(n, t, b, x.row())
}

/// Spatial module `N3(soft(N2(x); θ))` applied along PE.
pub fn spatial_module(x: &KTSlice2D, phase: &PhaseParams) -> Result<KTSlice2D> {
    let (n, t) = (x.n_pe(), x.n_time());
    let theta = phase.theta();
    let acts2 = phase.n2.forward(to_pe_lines(x.data(), n, t), t, n);
    let v: Vec<f64> = acts2.last().unwrap().iter().map(|&u| soft_real(u, theta)).collect();
    let acts3 = phase.n3.forward(v, t, n);
    KTSlice2D::image(n, t, from_pe_lines(acts3.last().unwrap(), n, t), x.row())
}

/// Everything one phase needs for its reverse pass.
struct PhaseCache {
    acts1: Vec<Vec<f64>>,
    acts2: Vec<Vec<f64>>,
    acts3: Vec<Vec<f64>>,
    dc: DcCache,
}

pub(crate) struct Forward {
    /// x⁰ followed by the K phase outputs.
    pub xs: Vec<Vec<C64>>,
    caches: Vec<PhaseCache>,
}

fn phase_forward(
    enc: &SliceEncoder,
    z: &[C64],
    x: &[C64],
    phase: &PhaseParams,
    spatial: SpatialInput,
) -> Result<(Vec<C64>, PhaseCache)> {
    let (n, t) = (enc.n_pe, enc.n_time);
    let acts1 = phase.n1.forward(to_time_lines(x, n, t), n, t);
    let n1 = from_time_lines(acts1.last().unwrap(), n, t);
    let b: Vec<C64> = x.iter().zip(&n1).map(|(a, c)| a - c).collect();
    let s_lines = match spatial {
        SpatialInput::Estimate => to_pe_lines(x, n, t),
        SpatialInput::TemporalOut => to_pe_lines(&n1, n, t),
    };
    let theta = phase.theta();
    let acts2 = phase.n2.forward(s_lines, t, n);
    let v: Vec<f64> = acts2.last().unwrap().iter().map(|&u| soft_real(u, theta)).collect();
    let acts3 = phase.n3.forward(v, t, n);
    let d = from_pe_lines(acts3.last().unwrap(), n, t);
    let (x_new, dc) = dc_forward(enc, z, &b, &d, phase.mu1, phase.mu2)?;
    Ok((x_new, PhaseCache { acts1, acts2, acts3, dc }))
}

fn check_stacks(params: &NetworkParams) -> Result<()> {
    for (k, p) in params.phases.iter().enumerate() {
        let ok = p.n1.in_channels() == 2
            && p.n1.out_channels() == 2
            && p.n2.in_channels() == 2
            && p.n3.in_channels() == p.n2.out_channels()
            && p.n3.out_channels() == 2;
        if !ok {
            return Err(Error::Config(format!("phase {k} has inconsistent channel counts")));
        }
    }
    Ok(())
}

pub(crate) fn forward_raw(enc: &SliceEncoder, z: &[C64], params: &NetworkParams) -> Result<Forward> {
    check_stacks(params)?;
    let spatial = params.arch.spatial_input;
    let mut xs = Vec::with_capacity(params.n_phases() + 1);
    xs.push(enc.adjoint(z));
    let mut caches = Vec::with_capacity(params.n_phases());
    for phase in &params.phases {
        let (x, cache) = phase_forward(enc, z, xs.last().unwrap(), phase, spatial)?;
        xs.push(x);
        caches.push(cache);
    }
    Ok(Forward { xs, caches })
}

impl Forward {
    /// On/off state of every ReLU unit and soft-threshold entry.
    pub(crate) fn kink_pattern(&self, params: &NetworkParams) -> Vec<bool> {
        let mut out = Vec::new();
        for (c, p) in self.caches.iter().zip(&params.phases) {
            p.n1.relu_pattern(&c.acts1, &mut out);
            p.n2.relu_pattern(&c.acts2, &mut out);
            let theta = p.theta();
            out.extend(c.acts2.last().unwrap().iter().map(|u| u.abs() > theta));
            p.n3.relu_pattern(&c.acts3, &mut out);
        }
        out
    }
}

fn check_slice(z: &KTSlice2D, enc: &SliceEncoder) -> Result<()> {
    if z.tensor().extents() != [enc.n_pe, enc.n_coils, enc.n_time] {
        return Err(Error::Shape(format!(
            "k-t slice {:?} does not match maps/mask [{}, {}, {}]",
            z.tensor().extents(),
            enc.n_pe,
            enc.n_coils,
            enc.n_time
        )));
    }
    Ok(())
}

/// All K phase outputs for one row.
pub fn network_forward(z: &KTSlice2D, maps: &CoilMaps, mask: &SamplingMask, params: &NetworkParams) -> Result<Vec<KTSlice2D>> {
    let enc = SliceEncoder::new(maps, mask)?;
    check_slice(z, &enc)?;
    let fwd = forward_raw(&enc, z.data(), params)?;
    fwd.xs
        .into_iter()
        .skip(1)
        .map(|x| KTSlice2D::image(enc.n_pe, enc.n_time, x, z.row()))
        .collect()
}

/// `(1/(K·C)) Σ_k Σ_c ‖ref_c − x_c^{(k)}‖²`, with `outputs[c]` the K outputs of sample c.
pub fn loss(outputs: &[Vec<KTSlice2D>], refs: &[KTSlice2D]) -> Result<f64> {
    if outputs.len() != refs.len() || outputs.is_empty() {
        return Err(Error::Shape(format!("{} output sets for {} references", outputs.len(), refs.len())));
    }
    let k = outputs[0].len();
    let mut total = 0.0;
    for (outs, r) in outputs.iter().zip(refs) {
        if outs.len() != k || k == 0 {
            return Err(Error::Shape("every sample needs the same nonzero number of phases".into()));
        }
        for o in outs {
            if o.tensor().extents() != r.tensor().extents() {
                return Err(Error::Shape("output and reference extents differ".into()));
            }
            total += sq_dist(o.data(), r.data());
        }
    }
    Ok(total / (k * outputs.len()) as f64)
}

fn sq_dist(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
}

/// Loss contribution and parameter gradient for one sample.
///
/// Returns `Σ_k ‖ref − x^{(k)}‖²` (unnormalized) and the gradient of
/// `scale · Σ_k ‖ref − x^{(k)}‖²`.
pub(crate) fn sample_grad(
    enc: &SliceEncoder,
    z: &[C64],
    reference: &[C64],
    params: &NetworkParams,
    scale: f64,
) -> Result<(f64, NetworkParams)> {
    let fwd = forward_raw(enc, z, params)?;
    let sum: f64 = fwd.xs[1..].iter().map(|x| sq_dist(x, reference)).sum();
    Ok((sum, backward_raw(enc, &fwd, reference, params, scale)))
}

fn backward_raw(enc: &SliceEncoder, fwd: &Forward, reference: &[C64], params: &NetworkParams, scale: f64) -> NetworkParams {
    let (n, t) = (enc.n_pe, enc.n_time);
    let spatial = params.arch.spatial_input;
    let mut grads = params.zeros_like();
    let k_total = params.n_phases();
    let loss_grad = |x: &[C64]| -> Vec<C64> { x.iter().zip(reference).map(|(a, r)| (a - r) * (2.0 * scale)).collect() };
    let mut g = loss_grad(&fwd.xs[k_total]);
    for k in (0..k_total).rev() {
        let phase = &params.phases[k];
        let cache = &fwd.caches[k];
        let gp = &mut grads.phases[k];

        let dg = dc_backward(enc, &cache.dc, &g, phase.mu1, phase.mu2);
        gp.mu1 += dg.mu1;
        gp.mu2 += dg.mu2;

        // spatial branch
        let g_v = phase.n3.backward(&cache.acts3, to_pe_lines(&dg.d, n, t), t, n, &mut gp.n3);
        let theta = phase.theta();
        let u = cache.acts2.last().unwrap();
        let mut g_theta = 0.0;
        let g_u: Vec<f64> = u
            .iter()
            .zip(&g_v)
            .map(|(&u, &gv)| {
                if u.abs() > theta {
                    g_theta -= u.signum() * gv;
                    gv
                } else {
                    0.0
                }
            })
            .collect();
        gp.theta_raw += g_theta * sigmoid(phase.theta_raw);
        let g_s = from_pe_lines(&phase.n2.backward(&cache.acts2, g_u, t, n, &mut gp.n2), n, t);

        // temporal branch: b = x − N1(x)
        let mut g_x = dg.b.clone();
        let mut g_n1: Vec<C64> = dg.b.iter().map(|v| -v).collect();
        match spatial {
            SpatialInput::Estimate => g_x.iter_mut().zip(&g_s).for_each(|(a, b)| *a += b),
            SpatialInput::TemporalOut => g_n1.iter_mut().zip(&g_s).for_each(|(a, b)| *a += b),
        }
        let g_in = from_time_lines(&phase.n1.backward(&cache.acts1, to_time_lines(&g_n1, n, t), n, t, &mut gp.n1), n, t);
        g_x.iter_mut().zip(&g_in).for_each(|(a, b)| *a += b);

        if k > 0 {
            let lg = loss_grad(&fwd.xs[k]);
            g_x.iter_mut().zip(&lg).for_each(|(a, b)| *a += b);
        }
        g = g_x;
    }
    grads
}

/// Loss over a set of samples and its exact parameter gradient.
pub fn backward(
    zs: &[KTSlice2D],
    maps: &[CoilMaps],
    mask: &SamplingMask,
    params: &NetworkParams,
    refs: &[KTSlice2D],
) -> Result<(f64, NetworkParams)> {
    if zs.len() != refs.len() || zs.len() != maps.len() || zs.is_empty() {
        return Err(Error::Shape("backward needs matching nonempty inputs, maps and references".into()));
    }
    let scale = 1.0 / (params.n_phases() * zs.len()) as f64;
    let mut total = 0.0;
    let mut grads = params.zeros_like();
    for ((z, m), r) in zs.iter().zip(maps).zip(refs) {
        let enc = SliceEncoder::new(m, mask)?;
        check_slice(z, &enc)?;
        if r.data().len() != enc.image_len() {
            return Err(Error::Shape("reference does not match the encoder".into()));
        }
        let (l, g) = sample_grad(&enc, z.data(), r.data(), params, scale)?;
        total += l;
        grads.axpy(1.0, &g);
    }
    Ok((total * scale, grads))
}
