//! 1D convolution layers over batches of lines.
//!
//! Activations are laid out (lines, channels, length), row-major. Convolution
//! is same-length with zero padding and stride 1.

use rand::Rng as _;

use crate::seed::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub in_ch: usize,
    pub out_ch: usize,
    pub ksize: usize,
    /// (out, in, k) row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub relu: bool,
}

impl Conv1d {
    pub fn zeros(in_ch: usize, out_ch: usize, ksize: usize, relu: bool) -> Self {
        Self { in_ch, out_ch, ksize, weight: vec![0.0; out_ch * in_ch * ksize], bias: vec![0.0; out_ch], relu }
    }

    /// Uniform weights in ±1/√(in_ch·ksize), zero bias.
    pub fn init(in_ch: usize, out_ch: usize, ksize: usize, relu: bool, rng: &mut Rng) -> Self {
        let scale = 1.0 / ((in_ch * ksize) as f64).sqrt();
        let mut layer = Self::zeros(in_ch, out_ch, ksize, relu);
        layer.weight.iter_mut().for_each(|w| *w = (rng.random::<f64>() * 2.0 - 1.0) * scale);
        layer
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    #[inline]
    fn span(&self, k: usize, len: usize) -> (isize, usize, usize) {
        let shift = k as isize - (self.ksize / 2) as isize;
        let lo = (-shift).max(0) as usize;
        let hi = (len as isize - shift).min(len as isize).max(0) as usize;
        (shift, lo, hi)
    }

    pub fn forward(&self, x: &[f64], lines: usize, len: usize) -> Vec<f64> {
        let (ci, co) = (self.in_ch, self.out_ch);
        debug_assert_eq!(x.len(), lines * ci * len);
        let mut y = vec![0.0; lines * co * len];
        for l in 0..lines {
            let xin = &x[l * ci * len..(l + 1) * ci * len];
            for o in 0..co {
                let row = &mut y[(l * co + o) * len..(l * co + o + 1) * len];
                row.fill(self.bias[o]);
                for c in 0..ci {
                    let xc = &xin[c * len..(c + 1) * len];
                    for k in 0..self.ksize {
                        let w = self.weight[(o * ci + c) * self.ksize + k];
                        let (shift, lo, hi) = self.span(k, len);
                        for i in lo..hi {
                            row[i] += w * xc[(i as isize + shift) as usize];
                        }
                    }
                }
                if self.relu {
                    row.iter_mut().for_each(|v| *v = v.max(0.0));
                }
            }
        }
        y
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    /// `y` is this layer's (post-activation) output; ReLU passes gradient only where `y > 0`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        x: &[f64],
        y: &[f64],
        gy: &[f64],
        lines: usize,
        len: usize,
        gw: &mut [f64],
        gb: &mut [f64],
    ) -> Vec<f64> {
        let (ci, co) = (self.in_ch, self.out_ch);
        let mut gx = vec![0.0; lines * ci * len];
        let mut gpre = vec![0.0; len];
        for l in 0..lines {
            let xin = &x[l * ci * len..(l + 1) * ci * len];
            let gxl = &mut gx[l * ci * len..(l + 1) * ci * len];
            for o in 0..co {
                let off = (l * co + o) * len;
                for i in 0..len {
                    gpre[i] = if !self.relu || y[off + i] > 0.0 { gy[off + i] } else { 0.0 };
                }
                gb[o] += gpre.iter().sum::<f64>();
                for c in 0..ci {
                    let xc = &xin[c * len..(c + 1) * len];
                    let gxc = &mut gxl[c * len..(c + 1) * len];
                    for k in 0..self.ksize {
                        let widx = (o * ci + c) * self.ksize + k;
                        let w = self.weight[widx];
                        let (shift, lo, hi) = self.span(k, len);
                        let mut acc = 0.0;
                        for i in lo..hi {
                            let j = (i as isize + shift) as usize;
                            acc += gpre[i] * xc[j];
                            gxc[j] += w * gpre[i];
                        }
                        gw[widx] += acc;
                    }
                }
            }
        }
        gx
    }
}

/// A sequence of convolution layers.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ConvStack {
    pub layers: Vec<Conv1d>,
}

impl ConvStack {
    pub fn new(layers: Vec<Conv1d>) -> Self {
        Self { layers }
    }

    /// Builds `channels = [c0, c1, ..., cL]` with ReLU after every layer except
    /// the last when `relu_last` is false.
    pub fn init(channels: &[usize], ksize: usize, relu_last: bool, rng: &mut Rng) -> Self {
        let n = channels.len() - 1;
        let layers = (0..n)
            .map(|i| Conv1d::init(channels[i], channels[i + 1], ksize, i + 1 < n || relu_last, rng))
            .collect();
        Self { layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Conv1d::param_count).sum()
    }

    pub fn in_channels(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_ch)
    }

    pub fn out_channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_ch)
    }

    /// Returns every activation: `acts[0]` is the input, `acts[i+1]` the output of layer i.
    pub fn forward(&self, x: Vec<f64>, lines: usize, len: usize) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        for layer in &self.layers {
            let y = layer.forward(acts.last().unwrap(), lines, len);
            acts.push(y);
        }
        acts
    }

    /// Backpropagates `g_out` through the stack, accumulating into `grads`.
    pub fn backward(&self, acts: &[Vec<f64>], g_out: Vec<f64>, lines: usize, len: usize, grads: &mut ConvStack) -> Vec<f64> {
        let mut g = g_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let gl = &mut grads.layers[i];
            g = layer.backward(&acts[i], &acts[i + 1], &g, lines, len, &mut gl.weight, &mut gl.bias);
        }
        g
    }

    /// Whether each ReLU unit is active; used to detect kink crossings.
    pub fn relu_pattern(&self, acts: &[Vec<f64>], out: &mut Vec<bool>) {
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.relu {
                out.extend(acts[i + 1].iter().map(|&v| v > 0.0));
            }
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Conv1d::zeros(l.in_ch, l.out_ch, l.ksize, l.relu))
                .collect(),
        }
    }
}
