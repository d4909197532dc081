use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ktsep::classical::{solve_classical_volume, ClassicalConfig};
use ktsep::experiment::{run_experiment, ExperimentSpec, Method};
use ktsep::images::emit_images;
use ktsep::ktb;
use ktsep::metrics::evaluate;
use ktsep::net::{
    build_training_set, gradcheck, infer_volume, load_params, save_params, train, GradcheckConfig, GradcheckProblem,
    NetArch, NetworkParams, ScConfig, SpatialInput, TrainConfig,
};
use ktsep::phantom::{gen_coil_maps, gen_phantom, simulate_acquisition, PhantomSpec};
use ktsep::sampling::{audit_mask, generate, load_mask, save_mask, MaskSpec};
use ktsep::{CoilMaps, Domain, Error, KTVolume, PatternKind};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  2  usage error (unknown flag, missing argument)
  3  file missing or unreadable/unwritable
  4  malformed file (bad magic, version, truncation)
  5  configuration invariant violated
  6  shape, axis or domain mismatch
  7  numerical failure (divergence, non-finite data)
  8  gradient check failed

Errors are printed to stderr as one line: error code=<n> kind=<kind> msg=<text>";

const GRADCHECK_TOL: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "ktsep", version, about = "Separable k-t MRI reconstruction toolkit", after_help = EXIT_CODES)]
struct Cli {
    /// Worker threads for row-parallel work (0 = all cores). Never changes results.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a dynamic phantom (FE, PE, TIME) and optionally coil maps.
    Phantom(PhantomArgs),
    /// Generate a k-t undersampling mask.
    Mask(MaskArgs),
    /// Simulate undersampled multi-coil k-space from an image.
    Acquire(AcquireArgs),
    /// Classical subspace + sparsity reconstruction.
    ReconClassical(ReconClassicalArgs),
    /// Train the unrolled network on fully sampled image volumes.
    Train(TrainArgs),
    /// Reconstruct with trained network parameters.
    ReconNet(ReconNetArgs),
    /// Compare a reconstruction against a reference.
    Eval(EvalArgs),
    /// Finite-difference check of every network gradient.
    Gradcheck(GradcheckArgs),
    /// Run the full phantom study from a JSON spec.
    RunExperiment(RunArgs),
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long, default_value_t = 32)]
    m: usize,
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    t: usize,
    #[arg(long, default_value_t = 4)]
    j: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Full phantom spec as JSON (overrides the size and seed flags).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write coil maps (FE, PE, COIL).
    #[arg(long)]
    maps_out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    maps_seed: u64,
}

#[derive(Args)]
struct MaskArgs {
    #[arg(long)]
    n_pe: usize,
    #[arg(long)]
    n_time: usize,
    #[arg(long)]
    af: f64,
    /// RANDOM_KT or VISTA_LIKE
    #[arg(long, default_value = "RANDOM_KT")]
    pattern: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n_center: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AcquireArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    maps: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconInputs {
    #[arg(long)]
    kspace: PathBuf,
    #[arg(long)]
    maps: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReconClassicalArgs {
    #[command(flatten)]
    io: ReconInputs,
    /// Solver configuration as JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Fully sampled IMAGE volumes (FE, PE, TIME).
    #[arg(long, num_args = 1.., required = true)]
    volumes: Vec<PathBuf>,
    /// Coil maps shared by all volumes.
    #[arg(long)]
    maps: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// Training configuration as JSON; missing fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    phases: usize,
    #[arg(long, default_value_t = 16)]
    filters: usize,
    #[arg(long, default_value_t = 3)]
    kernel_size: usize,
    /// ESTIMATE or TEMPORAL_OUT
    #[arg(long, default_value = "ESTIMATE")]
    spatial_input: String,
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
    #[arg(long, default_value_t = 0)]
    init_seed: u64,
    /// Overrides the config's shuffle seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct ReconNetArgs {
    #[command(flatten)]
    io: ReconInputs,
    #[arg(long)]
    params: PathBuf,
    /// Apply FE-smoothing post-processing.
    #[arg(long)]
    sc: bool,
    #[arg(long, default_value_t = 10)]
    sc_rounds: usize,
    #[arg(long, default_value_t = 0.1)]
    sc_weight: f64,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    rec: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Mask file whose metadata labels the report.
    #[arg(long)]
    mask: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write magnitude and error images here.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    profile_col: Option<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 2)]
    phases: usize,
    #[arg(long, default_value_t = 8)]
    filters: usize,
    #[arg(long, default_value_t = 6)]
    n_pe: usize,
    #[arg(long, default_value_t = 4)]
    n_time: usize,
    #[arg(long, default_value_t = 2)]
    n_coils: usize,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment spec JSON; omit to use the desk configuration.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Global seed for the desk configuration.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// CLI failure: exit code, kind and message.
struct Failure(u8, &'static str, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::Io { .. } => (3, "io"),
            Error::BadMagic { .. } | Error::VersionMismatch { .. } | Error::Truncated { .. } | Error::Malformed(_) | Error::Json(_) => {
                (4, "format")
            }
            Error::Config(_) | Error::Mask(_) | Error::Unnormalized(_) => (5, "config"),
            Error::Shape(_) | Error::Axis(_) | Error::Domain { .. } | Error::Rows(_) => (6, "shape"),
            Error::NonFinite(_) | Error::Diverged { .. } => (7, "numeric"),
        };
        Failure(code, kind, e.to_string())
    }
}

type Res<T> = std::result::Result<T, Failure>;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Res<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(serde_json::from_str(&s).map_err(Error::from)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Res<()> {
    std::fs::write(path, bytes).map_err(|e| Failure::from(Error::Io { path: path.into(), source: e }))
}

fn load_volume(path: &Path, domain: Domain) -> Res<KTVolume> {
    Ok(KTVolume::new(ktb::load_complex(path)?, domain)?)
}

fn load_maps(path: &Path) -> Res<CoilMaps> {
    Ok(CoilMaps::new(ktb::load_complex(path)?)?)
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str, what: &str) -> Res<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Failure(5, "config", format!("unknown {what} {s:?}")))
}

fn run(cli: Cli) -> Res<()> {
    let threads = cli.threads;
    match cli.cmd {
        Cmd::Phantom(a) => {
            let spec = match &a.spec {
                Some(p) => read_json::<PhantomSpec>(p)?,
                None => PhantomSpec::desk(a.m, a.n, a.t, a.j, a.seed),
            };
            spec.validate()?;
            ktb::save_tensor(gen_phantom(&spec)?.tensor(), &a.out)?;
            if let Some(mp) = &a.maps_out {
                ktb::save_tensor(gen_coil_maps(spec.m, spec.n, spec.j, a.maps_seed)?.tensor(), mp)?;
            }
        }
        Cmd::Mask(a) => {
            let pattern: PatternKind = parse_enum(&a.pattern, "pattern")?;
            let mut spec = MaskSpec::new(a.n_pe, a.n_time, a.af, pattern, a.seed);
            spec.n_center = a.n_center;
            let mask = generate(&spec)?;
            save_mask(&mask, &a.out)?;
            let audit = audit_mask(&mask);
            println!("realized_af={} per_frame={:?}", audit.realized_af, audit.per_frame_counts);
        }
        Cmd::Acquire(a) => {
            let image = load_volume(&a.image, Domain::Image)?;
            let y = simulate_acquisition(&image, &load_maps(&a.maps)?, &load_mask(&a.mask)?, a.noise_std, a.seed)?;
            ktb::save_tensor(y.tensor(), &a.out)?;
        }
        Cmd::ReconClassical(a) => {
            let cfg: ClassicalConfig = match &a.config {
                Some(p) => read_json(p)?,
                None => ClassicalConfig::default(),
            };
            let y = load_volume(&a.io.kspace, Domain::KSpace)?;
            let x = solve_classical_volume(&y, &load_maps(&a.io.maps)?, &load_mask(&a.io.mask)?, &cfg, threads)?;
            ktb::save_tensor(x.tensor(), &a.io.out)?;
        }
        Cmd::Train(a) => {
            let mut cfg: TrainConfig = match &a.config {
                Some(p) => read_json(p)?,
                None => TrainConfig::default(),
            };
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(e) = a.epochs {
                cfg.epochs = e;
            }
            cfg.threads = threads;
            let maps = load_maps(&a.maps)?;
            let mask = load_mask(&a.mask)?;
            let vols = a.volumes.iter().map(|p| load_volume(p, Domain::Image)).collect::<Res<Vec<_>>>()?;
            let set = build_training_set(&vols, &vec![maps; vols.len()], &mask, a.noise_std, a.noise_seed)?;
            let mut arch = NetArch::new(a.phases, a.filters, a.kernel_size);
            arch.spatial_input = parse_enum::<SpatialInput>(&a.spatial_input, "spatial input")?;
            let (params, trace) = train(&set, &cfg, NetworkParams::init(arch, a.init_seed)?)?;
            save_params(&a.out, &params)?;
            if let Some(t) = &a.trace {
                write_file(t, trace.to_csv().as_bytes())?;
            }
            if let Some(last) = trace.epochs.last() {
                println!("epochs={} final_loss={:e}", trace.epochs.len(), last.mean_loss);
            }
        }
        Cmd::ReconNet(a) => {
            let params = load_params(&a.params)?;
            let y = load_volume(&a.io.kspace, Domain::KSpace)?;
            let sc = ScConfig { rounds: a.sc_rounds, weight: a.sc_weight };
            let x = infer_volume(&y, &load_maps(&a.io.maps)?, &load_mask(&a.io.mask)?, &params, a.sc.then_some(&sc), threads)?;
            ktb::save_tensor(x.tensor(), &a.io.out)?;
        }
        Cmd::Eval(a) => {
            let rec = load_volume(&a.rec, Domain::Image)?;
            let reference = load_volume(&a.reference, Domain::Image)?;
            let mask_label = match &a.mask {
                Some(p) => {
                    let m = load_mask(p)?;
                    format!("{}_AF{}", m.meta().pattern, m.meta().af)
                }
                None => "unknown".into(),
            };
            let name = |p: &Path| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let rep = evaluate(&rec, &reference, &name(&a.reference), &name(&a.rec), &mask_label)?;
            println!("rlne={} psnr_db={} ssim={}", rep.rlne, rep.psnr_db, rep.ssim);
            if let Some(p) = &a.csv {
                write_file(p, rep.to_csv().as_bytes())?;
            }
            if let Some(p) = &a.json {
                write_file(p, rep.to_json()?.as_bytes())?;
            }
            if let Some(dir) = &a.images {
                emit_images(&rec, Some(&reference), dir, a.profile_col.unwrap_or(rec.n_pe() / 2))?;
            }
        }
        Cmd::Gradcheck(a) => {
            let cfg = GradcheckConfig {
                phases: a.phases,
                filters: a.filters,
                n_pe: a.n_pe,
                n_time: a.n_time,
                n_coils: a.n_coils,
                step: a.step,
                seed: a.seed,
            };
            let rep = gradcheck(&GradcheckProblem::new(&cfg)?, cfg.step)?;
            let classes: Vec<String> = rep.per_class.iter().map(|(c, v)| format!("{}={v:.3e}", serde_json::to_value(c).unwrap().as_str().unwrap())).collect();
            println!(
                "worst_rel_err={:.6e} param={} checked={} skipped={} {}",
                rep.worst_rel_err,
                rep.worst_param,
                rep.checked,
                rep.skipped,
                classes.join(" ")
            );
            if !(rep.worst_rel_err < GRADCHECK_TOL) {
                return Err(Failure(8, "gradcheck", format!("worst relative error {:e} >= {GRADCHECK_TOL:e}", rep.worst_rel_err)));
            }
        }
        Cmd::RunExperiment(a) => {
            let spec = match &a.spec {
                Some(p) => read_json::<ExperimentSpec>(p)?,
                None => ExperimentSpec::desk(a.seed),
            };
            let res = run_experiment(&spec, a.out.as_deref(), threads)?;
            for (m, r) in &res.reports {
                println!("{} rlne={:.6} psnr_db={:.4} ssim={:.6}", Method::label(*m), r.rlne, r.psnr_db, r.ssim);
            }
        }
    }
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = e.print();
                return ExitCode::from(if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand { 2 } else { 0 });
            }
            let msg = e.render().to_string();
            let first = msg.lines().find(|l| !l.trim().is_empty()).unwrap_or("usage error");
            eprintln!("error code=2 kind=usage msg={}", one_line(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, kind, msg)) => {
            eprintln!("error code={code} kind={kind} msg={}", one_line(&msg));
            ExitCode::from(code)
        }
    }
}
