//! Mini-batch training with Adam and per-epoch exponential learning-rate decay.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::TrainingSet;
use super::model::{forward_raw, sample_grad};
use super::params::NetworkParams;
use crate::error::{Error, Result};
use crate::operators::SliceEncoder;
use crate::parallel::map_rows;
use crate::seed::{derive_seed, rng_stream};

/// μ1, μ2 are clamped to at least this after every optimizer step.
pub const MU_FLOOR: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Reduction {
    /// Loss divided by K · batch size.
    #[default]
    Mean,
    /// Loss divided by K only.
    Sum,
}

fn d_epochs() -> usize {
    200
}
fn d_batch() -> usize {
    32
}
fn d_lr() -> f64 {
    1e-3
}
fn d_decay() -> f64 {
    0.99
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_eps() -> f64 {
    1e-8
}
fn d_threads() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub learning_rate: f64,
    #[serde(default = "d_decay")]
    pub lr_decay: f64,
    #[serde(default = "d_beta1")]
    pub beta1: f64,
    #[serde(default = "d_beta2")]
    pub beta2: f64,
    #[serde(default = "d_eps")]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub reduction: Reduction,
    /// Worker count for per-sample gradients (1 = serial). Results do not
    /// depend on it: gradients are summed in sample order.
    #[serde(default = "d_threads")]
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: d_epochs(),
            batch_size: d_batch(),
            learning_rate: d_lr(),
            lr_decay: d_decay(),
            beta1: d_beta1(),
            beta2: d_beta2(),
            eps: d_eps(),
            seed: 0,
            reduction: Reduction::Mean,
            threads: d_threads(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.epochs > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && self.lr_decay > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if !ok {
            return Err(Error::Config("training configuration needs positive sizes and rates, betas in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over samples of `(1/K) Σ_k ‖ref − x^{(k)}‖²`.
    pub mean_loss: f64,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct LossTrace {
    pub epochs: Vec<EpochRecord>,
}

impl LossTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss,learning_rate\n");
        for r in &self.epochs {
            writeln!(s, "{},{:.17e},{:.17e}", r.epoch, r.mean_loss, r.learning_rate).unwrap();
        }
        s
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }

    fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64, cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + cfg.eps);
        }
    }
}

/// Trains `init` on `set`. Returns the final parameters and the loss trace.
pub fn train(set: &TrainingSet, cfg: &TrainConfig, init: NetworkParams) -> Result<(NetworkParams, LossTrace)> {
    train_with(set, cfg, init, |_, _| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with(
    set: &TrainingSet,
    cfg: &TrainConfig,
    init: NetworkParams,
    mut on_epoch: impl FnMut(&EpochRecord, &NetworkParams),
) -> Result<(NetworkParams, LossTrace)> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut params = init;
    params.arch.n_pe = Some(set.n_pe());
    params.arch.n_time = Some(set.n_time());
    let k = params.n_phases() as f64;
    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len());
    let mut trace = LossTrace::default();
    let mut order: Vec<usize> = (0..set.len()).collect();
    let shuffle_seed = derive_seed(cfg.seed, "shuffle");

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate * cfg.lr_decay.powi(epoch as i32);
        order.sort_unstable();
        order.shuffle(&mut rng_stream(shuffle_seed, epoch as u64));
        let mut epoch_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let scale = match cfg.reduction {
                Reduction::Mean => 1.0 / (k * batch.len() as f64),
                Reduction::Sum => 1.0 / k,
            };
            let results = map_rows(batch, cfg.threads, |&i| {
                let s = &set.samples[i];
                let enc = SliceEncoder::new(&s.maps, &set.mask)?;
                sample_grad(&enc, s.input.data(), s.label.data(), &params, scale)
            })?;
            let mut grad = vec![0.0; flat.len()];
            for (l, g) in &results {
                epoch_sum += l / k;
                for (a, b) in grad.iter_mut().zip(g.flatten()) {
                    *a += b;
                }
            }
            if !epoch_sum.is_finite() {
                return Err(Error::Diverged { epoch, loss: epoch_sum });
            }
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, loss: f64::NAN });
            }
            adam.update(&mut flat, &grad, lr, cfg);
            params.set_flat(&flat)?;
            for p in params.phases.iter_mut() {
                p.mu1 = p.mu1.max(MU_FLOOR);
                p.mu2 = p.mu2.max(MU_FLOOR);
            }
            flat = params.flatten();
        }
        let rec = EpochRecord { epoch, mean_loss: epoch_sum / set.len() as f64, learning_rate: lr };
        if !rec.mean_loss.is_finite() {
            return Err(Error::Diverged { epoch, loss: rec.mean_loss });
        }
        on_epoch(&rec, &params);
        trace.epochs.push(rec);
    }
    Ok((params, trace))
}

/// Mean squared error of each phase output over a set: entry k is
/// `mean_c ‖ref_c − x_c^{(k+1)}‖²`.
pub fn phase_losses(set: &TrainingSet, params: &NetworkParams, threads: usize) -> Result<Vec<f64>> {
    let per = map_rows(&set.samples, threads, |s| {
        let enc = SliceEncoder::new(&s.maps, &set.mask)?;
        let fwd = forward_raw(&enc, s.input.data(), params)?;
        Ok(fwd.xs[1..]
            .iter()
            .map(|x| x.iter().zip(s.label.data()).map(|(a, r)| (a - r).norm_sqr()).sum::<f64>())
            .collect::<Vec<f64>>())
    })?;
    let mut out = vec![0.0; params.n_phases()];
    for row in &per {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|v| *v /= set.len() as f64);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::dataset::build_training_set;
    use crate::net::params::NetArch;
    use crate::operators::SamplingMask;
    use crate::phantom::{gen_coil_maps, gen_phantom, PhantomSpec};

    fn tiny_set(rows: usize) -> TrainingSet {
        let x = gen_phantom(&PhantomSpec::desk(rows.max(4), 8, 4, 2, 1)).unwrap();
        let maps = gen_coil_maps(rows.max(4), 8, 2, 2).unwrap();
        let mut set = build_training_set(&[x], &[maps], &SamplingMask::full(8, 4), 0.0, 0).unwrap();
        set.samples.truncate(rows);
        set
    }

    #[test]
    fn reconstructible_sample_loss_decreases() {
        let set = tiny_set(1);
        let cfg = TrainConfig { epochs: 5, batch_size: 1, ..Default::default() };
        let init = NetworkParams::init(NetArch::new(1, 4, 3), 3).unwrap();
        let (_, trace) = train(&set, &cfg, init).unwrap();
        let l: Vec<f64> = trace.epochs.iter().map(|r| r.mean_loss).collect();
        assert!(l.windows(2).all(|w| w[1] < w[0]), "{l:?}");
        assert!(trace.to_csv().starts_with("epoch,mean_loss,learning_rate\n0,"));
    }

    #[test]
    fn deterministic_across_runs_and_threads() {
        let set = tiny_set(4);
        let cfg = TrainConfig { epochs: 2, batch_size: 3, seed: 5, ..Default::default() };
        let init = NetworkParams::init(NetArch::new(2, 4, 3), 3).unwrap();
        let (a, _) = train(&set, &cfg, init.clone()).unwrap();
        let (b, _) = train(&set, &cfg, init.clone()).unwrap();
        let (c, _) = train(&set, &TrainConfig { threads: 3, ..cfg.clone() }, init).unwrap();
        let bits = |p: &NetworkParams| p.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(bits(&a), bits(&c));
    }

    #[test]
    fn learning_rate_decays() {
        let set = tiny_set(1);
        let cfg = TrainConfig { epochs: 3, batch_size: 1, learning_rate: 0.01, lr_decay: 0.5, ..Default::default() };
        let (_, trace) = train(&set, &cfg, NetworkParams::init(NetArch::new(1, 2, 3), 0).unwrap()).unwrap();
        let lrs: Vec<f64> = trace.epochs.iter().map(|r| r.learning_rate).collect();
        assert_eq!(lrs, vec![0.01, 0.005, 0.0025]);
    }

    #[test]
    fn divergence_reported() {
        let set = tiny_set(1);
        let mut init = NetworkParams::init(NetArch::new(1, 2, 3), 0).unwrap();
        init.phases[0].n1.layers[0].bias[0] = f64::INFINITY;
        let cfg = TrainConfig { epochs: 1, batch_size: 1, ..Default::default() };
        let r = train(&set, &cfg, init);
        assert!(matches!(r, Err(Error::Diverged { .. })), "{r:?}");
    }
}
