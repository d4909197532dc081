//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails. Tolerances and runtime budgets are fixed here.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use common::*;
use ktsep::classical::{
    b_update, d_update, estimate_temporal_subspace, solve_classical, solve_classical_volume, x_update, BUpdateMode,
    ClassicalConfig, SparseTransform,
};
use ktsep::experiment::{run_experiment, ExperimentSpec, Method, PhantomSize};
use ktsep::fft::{fft1d, ifft1d};
use ktsep::net::{
    build_training_set, count_parameters, gradcheck, infer_volume, network_forward, separable_sample_count, GradcheckConfig,
    GradcheckProblem, NetArch, NetworkParams, ParamClass, DEFAULT_STEP,
};
use ktsep::operators::{adjoint_a, apply_mask, coil_combine, coil_expand, dehybridize, forward_a, hybridize, zero_filled};
use ktsep::sampling::{audit_mask, generate};
use ktsep::tensor::{split_rows, stitch_rows};
use ktsep::{AxisLabel, ComplexTensor, Domain, KTSlice2D, KTVolume, MaskSpec, PatternKind, C64};

const ADJOINT_TOL: f64 = 1e-10;
const ZF_ORACLE_TOL: f64 = 1e-12;
const PROX_TOL: f64 = 1e-12;
const NORMAL_EQ_TOL: f64 = 1e-10;
const B_DENSE_TOL: f64 = 1e-12;
const GRADCHECK_TOL: f64 = 1e-4;
const PUBLISHED_PARAM_COUNT: f64 = 564_520.0;
const PARAM_COUNT_REL: f64 = 0.01;
const PSNR_GAIN_DB: f64 = 3.0;
const RLNE_SLACK: f64 = 1.10;
const BASELINE_REL: f64 = 1e-9;
const DESK_SEED: u64 = 1;

type Check = fn() -> (bool, String);

fn main() {
    let criteria: [(u32, &str, Check, u64); 9] = [
        (1, "adjoint suite", adjoint_suite, 10),
        (2, "separability equivalence", separability, 10),
        (3, "sub-problem oracles", subproblem_oracles, 30),
        (4, "gradient gate", gradient_gate, 120),
        (5, "parameter count", parameter_count, 1),
        (6, "desk phantom study", desk_study, 1800),
        (7, "training-set bookkeeping", bookkeeping, 5),
        (8, "determinism", determinism, 600),
        (9, "mask suite", mask_suite, 10),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, check, budget) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let in_budget = took <= Duration::from_secs(budget);
        let pass = ok && in_budget;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {id} {name}: {} | {detail} | {:.2}s of {budget}s",
            if pass { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}

fn rel_adjoint_gap(fx_y: C64, x_fhy: C64, x: &[C64], y: &[C64]) -> f64 {
    (fx_y - x_fhy).norm() / (l2(x) * l2(y))
}

fn image_tensor(m: usize, n: usize, t: usize, data: Vec<C64>) -> ComplexTensor {
    ComplexTensor::new(vec![m, n, t], vec![AxisLabel::Fe, AxisLabel::Pe, AxisLabel::Time], data).unwrap()
}

fn adjoint_suite() -> (bool, String) {
    let mut r = rng(2024);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut odd = 0;
    for s in 0..20 {
        use rand::Rng;
        let mut m = r.random_range(1..=7usize);
        let mut n = r.random_range(2..=9usize);
        let t = r.random_range(1..=5usize);
        let j = r.random_range(1..=4usize);
        if s % 4 == 0 {
            // force odd lengths on a share of the shapes
            m |= 1;
            n |= 1;
        }
        if m % 2 == 1 || n % 2 == 1 {
            odd += 1;
        }
        let mut note = |k: &'static str, v: f64| {
            let e = worst.entry(k).or_insert(0.0);
            *e = e.max(v);
        };
        let maps = random_maps(&mut r, Some(m), n, j);
        let mask = random_mask(&mut r, n, t);

        for (k, label) in [("F_PE", AxisLabel::Pe), ("F_FE", AxisLabel::Fe)] {
            let x = image_tensor(m, n, t, cvec(&mut r, m * n * t));
            let y = image_tensor(m, n, t, cvec(&mut r, m * n * t));
            let fx = fft1d(&x, label).unwrap();
            let fhy = ifft1d(&y, label).unwrap();
            note(k, rel_adjoint_gap(dot(fx.data(), y.data()), dot(x.data(), fhy.data()), x.data(), y.data()));
        }

        let kdims = [m, n, j, t];
        let klab = vec![AxisLabel::Fe, AxisLabel::Pe, AxisLabel::Coil, AxisLabel::Time];
        let kx = ComplexTensor::new(kdims.to_vec(), klab.clone(), cvec(&mut r, m * n * j * t)).unwrap();
        let ky = ComplexTensor::new(kdims.to_vec(), klab.clone(), cvec(&mut r, m * n * j * t)).unwrap();
        let ux = apply_mask(&kx, &mask).unwrap();
        let uy = apply_mask(&ky, &mask).unwrap();
        note("U", rel_adjoint_gap(dot(ux.data(), ky.data()), dot(kx.data(), uy.data()), kx.data(), ky.data()));

        let x = image_tensor(m, n, t, cvec(&mut r, m * n * t));
        let sx = coil_expand(&x, &maps).unwrap();
        let shy = coil_combine(&ky, &maps).unwrap();
        note("S", rel_adjoint_gap(dot(sx.data(), ky.data()), dot(x.data(), shy.data()), x.data(), ky.data()));

        // hybridize is the inverse FE transform of a multi-coil volume
        let kv = KTVolume::new(kx.clone(), Domain::KSpace).unwrap();
        let hv = KTVolume::new(ky.clone(), Domain::Hybrid).unwrap();
        let hx = hybridize(&kv).unwrap();
        let dy = dehybridize(&hv).unwrap();
        note("F_FE^H (volume)", rel_adjoint_gap(dot(hx.data(), ky.data()), dot(kx.data(), dy.data()), kx.data(), ky.data()));

        let row_maps = maps.row(r.random_range(0..m)).unwrap();
        let xs = KTSlice2D::image(n, t, cvec(&mut r, n * t), 0).unwrap();
        let zs = KTSlice2D::kt(n, j, t, cvec(&mut r, n * j * t), 0).unwrap();
        let ax = forward_a(&xs, &row_maps, &mask).unwrap();
        let ahz = adjoint_a(&zs, &row_maps, &mask).unwrap();
        note("A", rel_adjoint_gap(dot(ax.data(), zs.data()), dot(xs.data(), ahz.data()), xs.data(), zs.data()));
    }
    let max = worst.values().copied().fold(0.0, f64::max);
    let list: Vec<String> = worst.iter().map(|(k, v)| format!("{k}={v:.1e}")).collect();
    (max < ADJOINT_TOL && odd > 0, format!("20 shapes ({odd} with odd lengths), worst gap {}", list.join(" ")))
}

fn separability() -> (bool, String) {
    let (m, n, j, t) = (4, 6, 2, 3);
    let mut r = rng(46);
    let maps = random_maps(&mut r, Some(m), n, j);
    let mask = random_mask(&mut r, n, t);
    let raw = cvec(&mut r, m * n * j * t);
    let y = KTVolume::multicoil(
        [m, n, j, t],
        apply_mask(
            &ComplexTensor::new(vec![m, n, j, t], vec![AxisLabel::Fe, AxisLabel::Pe, AxisLabel::Coil, AxisLabel::Time], raw)
                .unwrap(),
            &mask,
        )
        .unwrap()
        .into_data(),
        Domain::KSpace,
    )
    .unwrap();

    // explicit 3D adjoint: S* F_FE^H F_PE^H U
    let (ffe, fpe) = (dft(m), dft(n));
    let s = maps.data();
    let yd = y.data();
    let mut oracle = vec![C64::new(0.0, 0.0); m * n * t];
    for a in 0..m {
        for p in 0..n {
            for f in 0..t {
                let mut acc = C64::new(0.0, 0.0);
                for c in 0..j {
                    let mut coil = C64::new(0.0, 0.0);
                    for q in 0..m {
                        for k in 0..n {
                            if mask.is_sampled(k, f) {
                                coil += ffe[q][a].conj() * fpe[k][p].conj() * yd[((q * n + k) * j + c) * t + f];
                            }
                        }
                    }
                    acc += s[(a * n + p) * j + c].conj() * coil;
                }
                oracle[(a * n + p) * t + f] = acc;
            }
        }
    }
    let zf = zero_filled(&y, &maps, &mask).unwrap();
    let zf_err = max_diff(zf.data(), &oracle);

    let rows = split_rows(&hybridize(&y).unwrap()).unwrap();
    let adj_rows: Vec<KTSlice2D> = rows.iter().map(|z| adjoint_a(z, &maps.row(z.row()).unwrap(), &mask).unwrap()).collect();
    let adj_same = stitch_rows(&adj_rows).unwrap().data() == zf.data();

    let cfg = ClassicalConfig { transform: SparseTransform::Diff1d, rank: 1, iterations: 5, ..Default::default() };
    let cl_rows: Vec<KTSlice2D> =
        rows.iter().map(|z| solve_classical(z, &maps.row(z.row()).unwrap(), &mask, &cfg).unwrap()).collect();
    let cl_stitched = stitch_rows(&cl_rows).unwrap();
    let cl_same = [1, 3]
        .iter()
        .all(|&th| solve_classical_volume(&y, &maps, &mask, &cfg, th).unwrap().data() == cl_stitched.data());

    let params = NetworkParams::init(NetArch::new(2, 4, 3), 5).unwrap();
    let net_rows: Vec<KTSlice2D> = rows
        .iter()
        .map(|z| network_forward(z, &maps.row(z.row()).unwrap(), &mask, &params).unwrap().pop().unwrap())
        .collect();
    let net_stitched = stitch_rows(&net_rows).unwrap();
    let net_same = [1, 3]
        .iter()
        .all(|&th| infer_volume(&y, &maps, &mask, &params, None, th).unwrap().data() == net_stitched.data());

    (
        zf_err < ZF_ORACLE_TOL && adj_same && cl_same && net_same,
        format!(
            "4x6x2x3: zero-filled vs 3D oracle {zf_err:.1e}; bit-identical adjoint={adj_same} classical={cl_same} network={net_same}"
        ),
    )
}

/// Orthonormal full-depth Haar analysis matrix built from its basis functions.
fn haar_matrix(n: usize) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![1.0 / (n as f64).sqrt(); n]];
    for i in 1..n {
        let lvl = usize::BITS - 1 - i.leading_zeros();
        let k = i - (1 << lvl);
        let bs = n >> lvl;
        let amp = 1.0 / (bs as f64).sqrt();
        let mut row = vec![0.0; n];
        for (x, v) in row.iter_mut().enumerate().skip(k * bs).take(bs) {
            *v = if x < k * bs + bs / 2 { amp } else { -amp };
        }
        rows.push(row);
    }
    rows
}

fn subproblem_oracles() -> (bool, String) {
    use nalgebra::{DMatrix, DVector};
    let mut r = rng(77);

    // d_update: prox of rho*||D.||_1 with D orthonormal is D^H prox_scalar(D x)
    let (n, t) = (8, 3);
    let (lambda2, mu2) = (0.3, 0.8);
    let rho = lambda2 / mu2;
    let x = cvec(&mut r, n * t);
    let h = haar_matrix(n);
    let mut oracle = vec![C64::new(0.0, 0.0); n * t];
    for f in 0..t {
        let col: Vec<C64> = (0..n).map(|p| x[p * t + f]).collect();
        let coeffs: Vec<C64> = h
            .iter()
            .map(|row| {
                let c: C64 = row.iter().zip(&col).map(|(a, v)| v * *a).sum();
                C64::from_polar((c.norm() - rho).max(0.0), c.arg())
            })
            .collect();
        for p in 0..n {
            oracle[p * t + f] = (0..n).map(|i| coeffs[i] * h[i][p]).sum();
        }
    }
    let d = d_update(&x, n, t, SparseTransform::Haar1d, lambda2, mu2).unwrap();
    let d_err = max_diff(&d, &oracle);

    // x_update: dense normal equations (A^H A + (mu1 + mu2) I) x = A^H z + mu1 b + mu2 d
    let (n, t) = (4, 3);
    let (mu1, mu2) = (0.7, 1.3);
    let maps = random_maps(&mut r, None, n, 1);
    let mask = random_mask(&mut r, n, t);
    let f = dft(n);
    let s = maps.data();
    let dim = n * t;
    let a = DMatrix::<C64>::from_fn(dim, dim, |row, col| {
        let (k, tf) = (row / t, row % t);
        let (p, tc) = (col / t, col % t);
        if tf == tc && mask.is_sampled(k, tf) {
            f[k][p] * s[p]
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let z = cvec(&mut r, dim);
    let b = cvec(&mut r, dim);
    let dd = cvec(&mut r, dim);
    let ah = a.adjoint();
    let lhs = &ah * &a + DMatrix::<C64>::identity(dim, dim) * C64::new(mu1 + mu2, 0.0);
    let rhs = &ah * DVector::from_column_slice(&z)
        + DVector::from_column_slice(&b) * C64::new(mu1, 0.0)
        + DVector::from_column_slice(&dd) * C64::new(mu2, 0.0);
    let dense = lhs.lu().solve(&rhs).unwrap();
    let zs = KTSlice2D::kt(n, 1, t, z, 0).unwrap();
    let xu = x_update(&zs, &b, &dd, &maps, &mask, mu1, mu2).unwrap();
    let x_err = max_diff(xu.data(), dense.as_slice());

    // b_update: dense (I - c * P_null) applied to each temporal signal
    let (n, t) = (4, 3);
    let xs = KTSlice2D::image(n, t, cvec(&mut r, n * t), 0).unwrap();
    let proj = estimate_temporal_subspace(&xs, 1).unwrap();
    let v = DMatrix::<C64>::from_row_slice(t, 1, proj.basis());
    let p_null = DMatrix::<C64>::identity(t, t) - &v * v.adjoint();
    let (lambda1, mu1) = (0.2, 0.9);
    let mut b_err: f64 = 0.0;
    for (mode, c) in [
        (BUpdateMode::Verbatim, 2.0 * lambda1 / mu1),
        (BUpdateMode::Exact, 2.0 * lambda1 / (mu1 + 2.0 * lambda1)),
    ] {
        let op = DMatrix::<C64>::identity(t, t) - &p_null * C64::new(c, 0.0);
        let got = b_update(xs.data(), &proj, lambda1, mu1, mode);
        for p in 0..n {
            let sig = DVector::from_column_slice(&xs.data()[p * t..(p + 1) * t]);
            let want = &op * sig;
            b_err = b_err.max(max_diff(&got[p * t..(p + 1) * t], want.as_slice()));
        }
    }
    (
        d_err < PROX_TOL && x_err < NORMAL_EQ_TOL && b_err < B_DENSE_TOL,
        format!("d_update {d_err:.1e} (tol {PROX_TOL:.0e}), x_update {x_err:.1e} (tol {NORMAL_EQ_TOL:.0e}), b_update {b_err:.1e} (tol {B_DENSE_TOL:.0e})"),
    )
}

fn gradient_gate() -> (bool, String) {
    let cfg = GradcheckConfig::default();
    let rep = gradcheck(&GradcheckProblem::new(&cfg).unwrap(), DEFAULT_STEP).unwrap();
    let classes = [ParamClass::Kernel, ParamClass::Bias, ParamClass::Theta, ParamClass::Mu1, ParamClass::Mu2];
    let all_classes = classes.iter().all(|c| rep.per_class.contains_key(c));
    let per: Vec<String> = rep.per_class.iter().map(|(c, v)| format!("{c:?}={v:.1e}")).collect();
    (
        rep.worst_rel_err < GRADCHECK_TOL && all_classes,
        format!(
            "K={} filters={} {}x{}: worst {:.2e} at {} ({}), checked {} skipped {}",
            cfg.phases,
            cfg.filters,
            cfg.n_pe,
            cfg.n_time,
            rep.worst_rel_err,
            rep.worst_param,
            per.join(" "),
            rep.checked,
            rep.skipped
        ),
    )
}

fn parameter_count() -> (bool, String) {
    let count = count_parameters(&NetworkParams::init(NetArch::reference(), 0).unwrap()) as f64;
    let rel = (count - PUBLISHED_PARAM_COUNT).abs() / PUBLISHED_PARAM_COUNT;
    (rel <= PARAM_COUNT_REL, format!("{count} vs 564520 (rel diff {:.3}%)", rel * 100.0))
}

fn baseline_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/baselines/desk_seed1.csv")
}

/// (method, metric) -> value from an experiment report CSV.
fn parse_report(csv: &str) -> BTreeMap<(String, String), f64> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            let v = if c[3] == "inf" { f64::INFINITY } else { c[3].parse().unwrap() };
            ((c[1].to_string(), c[2].to_string()), v)
        })
        .collect()
}

fn desk_study() -> (bool, String) {
    let res = run_experiment(&ExperimentSpec::desk(DESK_SEED), None, 1).unwrap();
    let get = |m| res.report(m).unwrap();
    let (zf, cl, net, sc) = (get(Method::ZeroFilled), get(Method::Classical), get(Method::Net), get(Method::NetSc));
    let gain = net.psnr_db - zf.psnr_db;
    let rlne_ratio = net.rlne / cl.rlne;
    let ssim_ok = sc.ssim >= net.ssim;
    let mut ok = gain >= PSNR_GAIN_DB && rlne_ratio <= RLNE_SLACK && ssim_ok;

    let baseline = match std::fs::read_to_string(baseline_path()) {
        Ok(text) => {
            let want = parse_report(&text);
            let got = parse_report(&res.csv);
            let worst = want
                .iter()
                .map(|(k, w)| {
                    let g = got.get(k).copied().unwrap_or(f64::NAN);
                    if g == *w { 0.0 } else { (g - w).abs() / w.abs().max(1e-300) }
                })
                .fold(0.0, f64::max);
            let same_keys = want.len() == got.len();
            ok &= same_keys && worst <= BASELINE_REL;
            format!("frozen baseline max rel diff {worst:.1e}")
        }
        Err(_) => {
            ok = false;
            "frozen baseline missing".to_string()
        }
    };
    let monotone = res.phase_losses.as_ref().map(|p| p.windows(2).all(|w| w[1] <= w[0])).unwrap_or(false);
    (
        ok,
        format!(
            "PSNR NET {:.2} vs ZF {:.2} (+{gain:.2} dB, need {PSNR_GAIN_DB}); RLNE NET {:.4} vs CLASSICAL {:.4} (ratio {rlne_ratio:.3}, need <= {RLNE_SLACK}); SSIM NET_SC {:.4} vs NET {:.4}; phase losses non-increasing={monotone}; {baseline}",
            net.psnr_db, zf.psnr_db, net.rlne, cl.rlne, sc.ssim, net.ssim
        ),
    )
}

fn bookkeeping() -> (bool, String) {
    let mut r = rng(9);
    let mut lines = Vec::new();
    let mut ok = true;
    for (cases, slices, m, n, t) in [(2, 1, 4, 4, 2), (1, 3, 6, 4, 3), (3, 2, 5, 8, 2)] {
        let maps = random_maps(&mut r, Some(m), n, 2);
        let mask = random_mask(&mut r, n, t);
        let vols: Vec<KTVolume> =
            (0..cases * slices).map(|_| KTVolume::image(m, n, t, cvec(&mut r, m * n * t)).unwrap()).collect();
        let set = build_training_set(&vols, &vec![maps; vols.len()], &mask, 0.0, 1).unwrap();
        let want = separable_sample_count(cases, slices, m);
        ok &= set.len() == want && want == cases * slices * m;
        lines.push(format!("{cases}x{slices}x{m}={}", set.len()));
    }
    let large = separable_sample_count(100, 10, 192);
    ok &= large == 192_000;
    lines.push(format!("100x10x192={large}"));
    (ok, lines.join(", "))
}

fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn determinism() -> (bool, String) {
    let mut spec = ExperimentSpec::desk(11);
    spec.phantom = PhantomSize { m: 16, n: 16, t: 6, j: 2 };
    spec.net.phases = 2;
    spec.net.filters = 6;
    spec.net.training_volumes = 2;
    spec.net.train.epochs = 3;
    spec.net.train.batch_size = 8;
    spec.classical.iterations = 10;
    spec.images = true;
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<(usize, PathBuf)> = [1, 1, 4].iter().enumerate().map(|(i, &th)| (th, tmp.path().join(format!("run{i}")))).collect();
    let mut csvs = Vec::new();
    for (th, dir) in &runs {
        csvs.push(run_experiment(&spec, Some(dir), *th).unwrap().csv);
    }
    let trees: Vec<_> = runs.iter().map(|(_, d)| files_under(d)).collect();
    let ktb = trees[0].keys().filter(|k| k.extension().is_some_and(|e| e == "ktb")).count();
    let same_files = trees.windows(2).all(|w| w[0] == w[1]);
    let same_csv = csvs.windows(2).all(|w| w[0] == w[1]);
    (
        same_files && same_csv && ktb > 0,
        format!(
            "runs with threads 1,1,4: {} files ({ktb} KTB) byte-identical={same_files}, CSV identical={same_csv}",
            trees[0].len()
        ),
    )
}

fn mask_suite() -> (bool, String) {
    let mut ok = true;
    let mut checked = 0;
    for pattern in [PatternKind::RandomKt, PatternKind::VistaLike] {
        for (n, t) in [(32, 8), (96, 12)] {
            for af in [4.0, 6.0, 8.0] {
                for seed in 0..20 {
                    let spec = MaskSpec::new(n, t, af, pattern, seed);
                    let mask = generate(&spec).unwrap();
                    let budget = (n as f64 / af).round() as usize;
                    let audit = audit_mask(&mask);
                    ok &= audit.per_frame_counts.iter().all(|&c| c == budget);
                    let nc = spec.center_lines();
                    let c0 = n / 2 - nc / 2;
                    ok &= (0..t).all(|f| (c0..c0 + nc).all(|p| mask.is_sampled(p, f)));
                    ok &= generate(&spec).unwrap() == mask;
                    ok &= mask.meta().af == af && mask.meta().pattern == pattern && mask.meta().seed == seed;
                    ok &= audit.realized_af == (n * t) as f64 / (budget * t) as f64;
                    ok &= (n as f64 / af - budget as f64).abs() <= 0.5;
                    checked += 1;
                }
            }
        }
    }
    (ok, format!("{checked} masks: per-frame budgets, center lines, seed determinism, AF audit"))
}
