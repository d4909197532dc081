//! Learnable parameters of the unrolled network.

use serde::{Deserialize, Serialize};

use super::conv::{Conv1d, ConvStack};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng};

pub const THETA_INIT: f64 = 0.001;
pub const MU_INIT: f64 = 1.0;

/// Which image the spatial module consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpatialInput {
    /// The previous phase estimate x^{k-1}.
    #[default]
    Estimate,
    /// The temporal network output N1(x^{k-1}).
    TemporalOut,
}

/// Structural description of a network, stored alongside trained parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetArch {
    pub phases: usize,
    pub filters: usize,
    pub kernel_size: usize,
    #[serde(default)]
    pub spatial_input: SpatialInput,
    #[serde(default = "default_precision")]
    pub precision: String,
    #[serde(default = "default_padding")]
    pub padding: String,
    #[serde(default)]
    pub seed: u64,
    /// Row extents seen in training; inference rejects other sizes.
    #[serde(default)]
    pub n_pe: Option<usize>,
    #[serde(default)]
    pub n_time: Option<usize>,
}

fn default_precision() -> String {
    "complex128".into()
}
fn default_padding() -> String {
    "zero".into()
}

impl NetArch {
    pub fn new(phases: usize, filters: usize, kernel_size: usize) -> Self {
        Self {
            phases,
            filters,
            kernel_size,
            spatial_input: SpatialInput::Estimate,
            precision: default_precision(),
            padding: default_padding(),
            seed: 0,
            n_pe: None,
            n_time: None,
        }
    }

    /// K=10, 48 filters, kernel 3.
    pub fn reference() -> Self {
        Self::new(10, 48, 3)
    }

    /// K=3, 16 filters, kernel 3.
    pub fn desk() -> Self {
        Self::new(3, 16, 3)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases == 0 || self.filters == 0 {
            return Err(Error::Config("phases and filters must be positive".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!("kernel size must be odd, got {}", self.kernel_size)));
        }
        Ok(())
    }
}

/// One phase: temporal stack N1, spatial stacks N2/N3 around a soft threshold, DC weights.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseParams {
    pub n1: ConvStack,
    pub n2: ConvStack,
    pub n3: ConvStack,
    /// Softplus pre-image of θ; `-inf` encodes θ = 0.
    pub theta_raw: f64,
    pub mu1: f64,
    pub mu2: f64,
}

pub fn softplus(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn softplus_inv(y: f64) -> f64 {
    if y <= 0.0 {
        f64::NEG_INFINITY
    } else if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl PhaseParams {
    pub fn init(arch: &NetArch, seed: u64) -> Self {
        let (f, k) = (arch.filters, arch.kernel_size);
        let mut r = rng(seed);
        let n1 = ConvStack::init(&[2, f, f, f, f, f, 2], k, false, &mut r);
        let n2 = ConvStack::init(&[2, f, f, f], k, false, &mut r);
        let n3 = ConvStack::init(&[f, f, f, 2], k, false, &mut r);
        Self { n1, n2, n3, theta_raw: softplus_inv(THETA_INIT), mu1: MU_INIT, mu2: MU_INIT }
    }

    pub fn theta(&self) -> f64 {
        softplus(self.theta_raw)
    }

    pub fn set_theta(&mut self, theta: f64) {
        self.theta_raw = softplus_inv(theta);
    }

    pub fn param_count(&self) -> usize {
        self.n1.param_count() + self.n2.param_count() + self.n3.param_count() + 3
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            n1: self.n1.zeros_like(),
            n2: self.n2.zeros_like(),
            n3: self.n3.zeros_like(),
            theta_raw: 0.0,
            mu1: 0.0,
            mu2: 0.0,
        }
    }

    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, Vec<usize>, &'a [f64])>) {
        for (name, stack) in [("n1", &self.n1), ("n2", &self.n2), ("n3", &self.n3)] {
            for (i, l) in stack.layers.iter().enumerate() {
                out.push((format!("{prefix}.{name}.{i}.weight"), vec![l.out_ch, l.in_ch, l.ksize], &l.weight));
                out.push((format!("{prefix}.{name}.{i}.bias"), vec![l.out_ch], &l.bias));
            }
        }
        out.push((format!("{prefix}.theta_raw"), vec![1], std::slice::from_ref(&self.theta_raw)));
        out.push((format!("{prefix}.mu1"), vec![1], std::slice::from_ref(&self.mu1)));
        out.push((format!("{prefix}.mu2"), vec![1], std::slice::from_ref(&self.mu2)));
    }

    fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        for stack in [&mut self.n1, &mut self.n2, &mut self.n3] {
            for l in stack.layers.iter_mut() {
                out.push(&mut l.weight);
                out.push(&mut l.bias);
            }
        }
        out.push(std::slice::from_mut(&mut self.theta_raw));
        out.push(std::slice::from_mut(&mut self.mu1));
        out.push(std::slice::from_mut(&mut self.mu2));
    }
}

/// Parameter class used when reporting gradient checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamClass {
    Kernel,
    Bias,
    Theta,
    Mu1,
    Mu2,
}

impl ParamClass {
    pub fn of(name: &str) -> Self {
        if name.ends_with(".weight") {
            ParamClass::Kernel
        } else if name.ends_with(".bias") {
            ParamClass::Bias
        } else if name.ends_with(".theta_raw") {
            ParamClass::Theta
        } else if name.ends_with(".mu1") {
            ParamClass::Mu1
        } else {
            ParamClass::Mu2
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub arch: NetArch,
    pub phases: Vec<PhaseParams>,
}

impl NetworkParams {
    /// Fresh parameters; each phase draws from its own labeled seed stream.
    pub fn init(arch: NetArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut arch = arch;
        arch.seed = seed;
        let phases = (0..arch.phases)
            .map(|k| PhaseParams::init(&arch, derive_seed(seed, &format!("phase{k}"))))
            .collect();
        Ok(Self { arch, phases })
    }

    pub fn from_phases(arch: NetArch, phases: Vec<PhaseParams>) -> Result<Self> {
        if phases.is_empty() {
            return Err(Error::Config("network needs at least one phase".into()));
        }
        Ok(Self { arch, phases })
    }

    pub fn n_phases(&self) -> usize {
        self.phases.len()
    }

    pub fn zeros_like(&self) -> Self {
        Self { arch: self.arch.clone(), phases: self.phases.iter().map(PhaseParams::zeros_like).collect() }
    }

    /// Every tensor with its stable name and shape, in storage order.
    pub fn named_tensors(&self) -> Vec<(String, Vec<usize>, &[f64])> {
        let mut out = Vec::new();
        for (k, p) in self.phases.iter().enumerate() {
            p.tensors(&format!("phase{k}"), &mut out);
        }
        out
    }

    /// Mutable views in the same order as [`named_tensors`](Self::named_tensors).
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for p in self.phases.iter_mut() {
            p.tensors_mut(&mut out);
        }
        out
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.named_tensors().into_iter().flat_map(|(_, _, t)| t.iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        let mut off = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            let src = flat
                .get(off..off + n)
                .ok_or_else(|| Error::Shape("flat parameter vector too short".into()))?;
            t.copy_from_slice(src);
            off += n;
        }
        if off != flat.len() {
            return Err(Error::Shape("flat parameter vector too long".into()));
        }
        Ok(())
    }

    /// Elementwise `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &NetworkParams) {
        let src = other.flatten();
        let mut off = 0;
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v += alpha * src[off];
                off += 1;
            }
        }
    }
}

/// Total number of learnable scalars: kernels, biases, θ, μ1, μ2.
pub fn count_parameters(params: &NetworkParams) -> usize {
    params.phases.iter().map(PhaseParams::param_count).sum()
}

/// A single-phase network built from explicit stacks, for counting and tests.
pub fn single_phase(n1: ConvStack, n2: ConvStack, n3: ConvStack) -> NetworkParams {
    let ksize = n1.layers.first().map_or(1, |l: &Conv1d| l.ksize);
    let filters = n2.out_channels();
    NetworkParams {
        arch: NetArch::new(1, filters, ksize),
        phases: vec![PhaseParams { n1, n2, n3, theta_raw: softplus_inv(THETA_INIT), mu1: MU_INIT, mu2: MU_INIT }],
    }
}
