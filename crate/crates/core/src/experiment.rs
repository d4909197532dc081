//! Reproducible phantom study: phantom → mask → acquisition → reconstruction → metrics.
//!
//! One global seed fans out to every stochastic component through
//! [`derive_seed`] labels listed in [`ComponentSeeds`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classical::{solve_classical_volume, ClassicalConfig};
use crate::error::{Error, Result};
use crate::images::emit_images;
use crate::ktb;
use crate::metrics::{evaluate, fmt_metric, MetricReport};
use crate::net::{
    build_training_set, infer_volume, load_params, phase_losses, save_params, train, LossTrace, NetArch, NetworkParams,
    ScConfig, SpatialInput, TrainConfig,
};
use crate::operators::{zero_filled, CoilMaps, SamplingMask};
use crate::phantom::{gen_coil_maps, gen_phantom, simulate_acquisition, PhantomSpec};
use crate::sampling::{audit_mask, generate, save_mask, MaskSpec, PatternKind};
use crate::seed::derive_seed;
use crate::tensor::KTVolume;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    ZeroFilled,
    Classical,
    Net,
    NetSc,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::ZeroFilled => "ZERO_FILLED",
            Method::Classical => "CLASSICAL",
            Method::Net => "NET",
            Method::NetSc => "NET_SC",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSize {
    pub m: usize,
    pub n: usize,
    pub t: usize,
    pub j: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskSettings {
    pub af: f64,
    pub pattern: PatternKind,
    #[serde(default)]
    pub n_center: Option<usize>,
}

fn d_filters() -> usize {
    16
}
fn d_phases() -> usize {
    3
}
fn d_kernel() -> usize {
    3
}
fn d_training_volumes() -> usize {
    6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSettings {
    #[serde(default = "d_phases")]
    pub phases: usize,
    #[serde(default = "d_filters")]
    pub filters: usize,
    #[serde(default = "d_kernel")]
    pub kernel_size: usize,
    #[serde(default)]
    pub spatial_input: SpatialInput,
    #[serde(default = "d_training_volumes")]
    pub training_volumes: usize,
    #[serde(default)]
    pub train: TrainConfig,
    /// Use these trained parameters instead of training.
    #[serde(default)]
    pub params: Option<PathBuf>,
}

impl Default for NetSettings {
    fn default() -> Self {
        Self {
            phases: d_phases(),
            filters: d_filters(),
            kernel_size: d_kernel(),
            spatial_input: SpatialInput::Estimate,
            training_volumes: d_training_volumes(),
            train: TrainConfig::default(),
            params: None,
        }
    }
}

fn d_methods() -> Vec<Method> {
    vec![Method::ZeroFilled, Method::Classical, Method::Net, Method::NetSc]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub seed: u64,
    pub phantom: PhantomSize,
    pub mask: MaskSettings,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default = "d_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub classical: ClassicalConfig,
    #[serde(default)]
    pub net: NetSettings,
    #[serde(default)]
    pub sc: ScConfig,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Write PGM images of every reconstruction.
    #[serde(default)]
    pub images: bool,
}

impl ExperimentSpec {
    /// M=N=32, T=8, J=4, AF=4 random k-t, six training volumes, all methods.
    pub fn desk(seed: u64) -> Self {
        Self {
            seed,
            phantom: PhantomSize { m: 32, n: 32, t: 8, j: 4 },
            mask: MaskSettings { af: 4.0, pattern: PatternKind::RandomKt, n_center: None },
            noise_std: 0.0,
            methods: d_methods(),
            classical: ClassicalConfig::default(),
            net: NetSettings::default(),
            sc: ScConfig::default(),
            output_dir: None,
            images: false,
        }
    }

    pub fn mask_spec(&self, seed: u64) -> MaskSpec {
        let mut s = MaskSpec::new(self.phantom.n, self.phantom.t, self.mask.af, self.mask.pattern, seed);
        s.n_center = self.mask.n_center;
        s
    }

    fn needs_net(&self) -> bool {
        self.methods.iter().any(|m| matches!(m, Method::Net | Method::NetSc))
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no reconstruction methods requested".into()));
        }
        self.mask_spec(0).validate()?;
        if self.methods.contains(&Method::Classical) {
            self.classical.validate(self.phantom.n, self.phantom.t)?;
        }
        if self.needs_net() {
            if let Some(p) = &self.net.params {
                if !p.exists() {
                    return Err(Error::Config(format!("parameter file {} does not exist", p.display())));
                }
            } else if self.net.training_volumes == 0 {
                return Err(Error::Config("training needs at least one volume".into()));
            }
            self.net.train.validate()?;
        }
        Ok(())
    }
}

/// Component seeds derived from the global seed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentSeeds {
    pub phantom: u64,
    pub maps: u64,
    pub mask: u64,
    pub noise: u64,
    pub training_phantoms: Vec<u64>,
    pub training_noise: u64,
    pub init: u64,
    pub train: u64,
}

impl ComponentSeeds {
    pub fn new(seed: u64, training_volumes: usize) -> Self {
        Self {
            phantom: derive_seed(seed, "phantom"),
            maps: derive_seed(seed, "maps"),
            mask: derive_seed(seed, "mask"),
            noise: derive_seed(seed, "noise"),
            training_phantoms: (0..training_volumes).map(|i| derive_seed(seed, &format!("train_phantom{i}"))).collect(),
            training_noise: derive_seed(seed, "train_noise"),
            init: derive_seed(seed, "init"),
            train: derive_seed(seed, "train"),
        }
    }
}

pub struct ExperimentResult {
    pub reports: Vec<(Method, MetricReport)>,
    pub recons: Vec<(Method, KTVolume)>,
    pub truth: KTVolume,
    pub params: Option<NetworkParams>,
    pub trace: Option<LossTrace>,
    /// Mean per-phase loss of the trained network on the held-out volume's rows.
    pub phase_losses: Option<Vec<f64>>,
    pub csv: String,
    pub seeds: ComponentSeeds,
}

impl ExperimentResult {
    pub fn report(&self, m: Method) -> Option<&MetricReport> {
        self.reports.iter().find(|(k, _)| *k == m).map(|(_, r)| r)
    }
}

/// Stable column order of the experiment CSV.
pub const REPORT_HEADER: &str = "volume,method,metric,value,pattern,af,realized_af,mask_seed,n_center";

fn report_csv(reports: &[(Method, MetricReport)], mask: &SamplingMask) -> String {
    let meta = mask.meta();
    let audit = audit_mask(mask);
    let mut s = format!("{REPORT_HEADER}\n");
    for (m, r) in reports {
        for (name, v) in [("rlne", r.rlne), ("psnr_db", r.psnr_db), ("ssim", r.ssim)] {
            writeln!(
                s,
                "{},{},{name},{},{},{},{:.10e},{},{}",
                r.reference_id,
                m.label(),
                fmt_metric(v),
                meta.pattern,
                meta.af,
                audit.realized_af,
                meta.seed,
                meta.n_center
            )
            .unwrap();
        }
    }
    s
}

fn desk_volume(spec: &ExperimentSpec, seed: u64) -> Result<KTVolume> {
    let p = &spec.phantom;
    gen_phantom(&PhantomSpec::desk(p.m, p.n, p.t, p.j, seed))
}

/// Trains (or loads) the network for a spec; the held-out volume is never used.
pub fn prepare_network(
    spec: &ExperimentSpec,
    seeds: &ComponentSeeds,
    maps: &CoilMaps,
    mask: &SamplingMask,
    threads: usize,
) -> Result<(NetworkParams, Option<LossTrace>)> {
    if let Some(p) = &spec.net.params {
        return Ok((load_params(p)?, None));
    }
    let vols = seeds
        .training_phantoms
        .iter()
        .map(|&s| desk_volume(spec, s))
        .collect::<Result<Vec<_>>>()?;
    let all_maps = vec![maps.clone(); vols.len()];
    let set = build_training_set(&vols, &all_maps, mask, spec.noise_std, seeds.training_noise)?;
    let mut arch = NetArch::new(spec.net.phases, spec.net.filters, spec.net.kernel_size);
    arch.spatial_input = spec.net.spatial_input;
    let init = NetworkParams::init(arch, seeds.init)?;
    let cfg = TrainConfig { seed: seeds.train, threads, ..spec.net.train.clone() };
    let (params, trace) = train(&set, &cfg, init)?;
    Ok((params, Some(trace)))
}

/// Runs the whole pipeline; with `out_dir`, writes every artifact there.
pub fn run_experiment(spec: &ExperimentSpec, out_dir: Option<&Path>, threads: usize) -> Result<ExperimentResult> {
    spec.validate()?;
    let seeds = ComponentSeeds::new(spec.seed, spec.net.training_volumes);
    let p = &spec.phantom;
    let truth = desk_volume(spec, seeds.phantom)?;
    let maps = gen_coil_maps(p.m, p.n, p.j, seeds.maps)?;
    let mask = generate(&spec.mask_spec(seeds.mask))?;
    let y = simulate_acquisition(&truth, &maps, &mask, spec.noise_std, seeds.noise)?;

    let (params, trace) = if spec.needs_net() {
        let (p, t) = prepare_network(spec, &seeds, &maps, &mask, threads)?;
        (Some(p), t)
    } else {
        (None, None)
    };

    let mut recons = Vec::new();
    for &m in &spec.methods {
        let x = match m {
            Method::ZeroFilled => zero_filled(&y, &maps, &mask)?,
            Method::Classical => solve_classical_volume(&y, &maps, &mask, &spec.classical, threads)?,
            Method::Net => infer_volume(&y, &maps, &mask, params.as_ref().unwrap(), None, threads)?,
            Method::NetSc => infer_volume(&y, &maps, &mask, params.as_ref().unwrap(), Some(&spec.sc), threads)?,
        };
        recons.push((m, x));
    }
    let mask_label = format!("{}_AF{}", mask.meta().pattern, mask.meta().af);
    let reports = recons
        .iter()
        .map(|(m, x)| Ok((*m, evaluate(x, &truth, "test", m.label(), &mask_label)?)))
        .collect::<Result<Vec<_>>>()?;
    let phase = match &params {
        Some(pp) => {
            let held_out = build_training_set(&[truth.clone()], &[maps.clone()], &mask, spec.noise_std, seeds.noise)?;
            Some(phase_losses(&held_out, pp, threads)?)
        }
        None => None,
    };
    let csv = report_csv(&reports, &mask);

    let out_dir = out_dir.map(Path::to_path_buf).or_else(|| spec.output_dir.clone());
    if let Some(dir) = &out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let w = |name: &str, bytes: &[u8]| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))
        };
        ktb::save_tensor(truth.tensor(), dir.join("truth.ktb"))?;
        ktb::save_tensor(maps.tensor(), dir.join("maps.ktb"))?;
        ktb::save_tensor(y.tensor(), dir.join("kspace.ktb"))?;
        save_mask(&mask, dir.join("mask.ktb"))?;
        for (m, x) in &recons {
            ktb::save_tensor(x.tensor(), dir.join(format!("recon_{}.ktb", m.label().to_lowercase())))?;
            if spec.images {
                emit_images(x, Some(&truth), &dir.join("images").join(m.label().to_lowercase()), p.n / 2)?;
            }
        }
        if let (Some(pp), None) = (&params, &spec.net.params) {
            save_params(dir.join("params.ktp"), pp)?;
        }
        if let Some(t) = &trace {
            w("loss_trace.csv", t.to_csv().as_bytes())?;
        }
        w("report.csv", csv.as_bytes())?;
        let js: Vec<serde_json::Value> = reports
            .iter()
            .map(|(_, r)| serde_json::from_str(&r.to_json()?).map_err(Error::from))
            .collect::<Result<_>>()?;
        w("report.json", serde_json::to_string_pretty(&js)?.as_bytes())?;
        w("seeds.json", serde_json::to_string_pretty(&seeds)?.as_bytes())?;
    }
    Ok(ExperimentResult { reports, recons, truth, params, trace, phase_losses: phase, csv, seeds })
}
