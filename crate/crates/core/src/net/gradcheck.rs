//! Central finite-difference check of every parameter gradient.

use std::collections::BTreeMap;

use rand::Rng as _;
use serde::Serialize;

use super::model::{forward_raw, sample_grad};
use super::params::{NetArch, NetworkParams, ParamClass};
use crate::error::Result;
use crate::operators::{CoilMaps, SamplingMask, SliceEncoder};
use crate::phantom::gen_coil_maps;
use crate::sampling::{generate, MaskSpec, PatternKind};
use crate::seed::{derive_seed, rng};
use crate::tensor::C64;

pub const DEFAULT_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub worst_rel_err: f64,
    pub worst_param: String,
    pub per_class: BTreeMap<ParamClass, f64>,
    pub checked: usize,
    /// Parameters whose perturbation crossed a ReLU/threshold kink at every tried step.
    pub skipped: usize,
    pub step: f64,
}

/// Gradient check configuration: network shape and slice size.
#[derive(Clone, Debug)]
pub struct GradcheckConfig {
    pub phases: usize,
    pub filters: usize,
    pub n_pe: usize,
    pub n_time: usize,
    pub n_coils: usize,
    pub step: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { phases: 2, filters: 8, n_pe: 6, n_time: 4, n_coils: 2, step: DEFAULT_STEP, seed: 7 }
    }
}

/// A problem instance for the check: random data, references and jittered parameters.
pub struct GradcheckProblem {
    pub params: NetworkParams,
    pub maps: CoilMaps,
    pub mask: SamplingMask,
    pub z: Vec<C64>,
    pub reference: Vec<C64>,
}

impl GradcheckProblem {
    pub fn new(cfg: &GradcheckConfig) -> Result<Self> {
        let mut params = NetworkParams::init(NetArch::new(cfg.phases, cfg.filters, 3), cfg.seed)?;
        let mut r = rng(derive_seed(cfg.seed, "gradcheck"));
        // move θ, μ and biases off their initial values so every class carries signal
        for (k, p) in params.phases.iter_mut().enumerate() {
            p.set_theta(0.02 * (k + 1) as f64);
            p.mu1 = 0.7 + 0.2 * k as f64;
            p.mu2 = 1.3 - 0.1 * k as f64;
            for s in [&mut p.n1, &mut p.n2, &mut p.n3] {
                for l in s.layers.iter_mut() {
                    l.bias.iter_mut().for_each(|b| *b = 0.05 * (r.random::<f64>() - 0.5));
                }
            }
        }
        let maps_vol = gen_coil_maps(1, cfg.n_pe, cfg.n_coils, derive_seed(cfg.seed, "maps"))?;
        let maps = maps_vol.row(0)?;
        let mask = generate(&MaskSpec::new(cfg.n_pe, cfg.n_time, 2.0, PatternKind::RandomKt, derive_seed(cfg.seed, "mask")))?;
        let nz = cfg.n_pe * cfg.n_coils * cfg.n_time;
        let z: Vec<C64> = (0..nz)
            .map(|i| {
                let p = i / (cfg.n_coils * cfg.n_time);
                let f = i % cfg.n_time;
                if mask.is_sampled(p, f) {
                    C64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5)
                } else {
                    C64::new(0.0, 0.0)
                }
            })
            .collect();
        let reference = (0..cfg.n_pe * cfg.n_time)
            .map(|_| C64::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5))
            .collect();
        Ok(Self { params, maps, mask, z, reference })
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Compares the analytic gradient of the single-sample loss against central
/// differences for every scalar parameter. When a perturbation flips any
/// ReLU or soft-threshold state the step is shrunk tenfold (up to three times);
/// parameters that still cross a kink are counted as skipped.
pub fn gradcheck(problem: &GradcheckProblem, step: f64) -> Result<GradcheckReport> {
    let enc = SliceEncoder::new(&problem.maps, &problem.mask)?;
    let params = &problem.params;
    let scale = 1.0 / params.n_phases() as f64;
    let (_, grads) = sample_grad(&enc, &problem.z, &problem.reference, params, scale)?;
    let analytic = grads.flatten();
    let base = forward_raw(&enc, &problem.z, params)?.kink_pattern(params);

    let eval = |flat: &[f64]| -> Result<(f64, Vec<bool>)> {
        let mut p = params.clone();
        p.set_flat(flat)?;
        let fwd = forward_raw(&enc, &problem.z, &p)?;
        let l: f64 = fwd.xs[1..]
            .iter()
            .map(|x| x.iter().zip(&problem.reference).map(|(a, r)| (a - r).norm_sqr()).sum::<f64>())
            .sum();
        Ok((l * scale, fwd.kink_pattern(&p)))
    };

    let names: Vec<String> = params
        .named_tensors()
        .into_iter()
        .flat_map(|(name, _, t)| (0..t.len()).map(move |i| format!("{name}[{i}]")))
        .collect();
    let flat = params.flatten();
    let mut report = GradcheckReport {
        worst_rel_err: 0.0,
        worst_param: String::new(),
        per_class: BTreeMap::new(),
        checked: 0,
        skipped: 0,
        step,
    };
    for (i, name) in names.iter().enumerate() {
        let mut h = step;
        let mut fd = None;
        for _ in 0..4 {
            let mut plus = flat.clone();
            plus[i] += h;
            let mut minus = flat.clone();
            minus[i] -= h;
            let (lp, kp) = eval(&plus)?;
            let (lm, km) = eval(&minus)?;
            if kp == base && km == base {
                fd = Some((lp - lm) / (2.0 * h));
                break;
            }
            h /= 10.0;
        }
        let Some(fd) = fd else {
            report.skipped += 1;
            continue;
        };
        let err = rel_err(fd, analytic[i]);
        let class = ParamClass::of(name.split('[').next().unwrap());
        let slot = report.per_class.entry(class).or_insert(0.0);
        *slot = slot.max(err);
        if err >= report.worst_rel_err {
            report.worst_rel_err = err;
            report.worst_param = name.clone();
        }
        report.checked += 1;
    }
    Ok(report)
}
