use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::Arc;
use std::time::{Duration, Instant};

use fluxinv::fem::{error_norms, BoundaryVector, ForwardModel, ProblemData};
use fluxinv::mesh::{generate_annulus_mesh, refine_uniform, save_mesh, Mesh, Tag};
use fluxinv::rates::{run_rate_study, ExperimentConfig};
use fluxinv::spectral::{build_spectral_basis, FluxCoefficients};
use fluxinv::stability::{fit_stability_modulus, StabilityProbe};
use fluxinv::tikhonov::{add_noise, build_forward_operator, AffineForwardOperator, TikhonovResult};
use fluxinv::vsc::{check_projector_conditions, check_vsc_inequality, fit_vsc_constants, generate_admissible_ensemble, log_grid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn annulus(h: f64) -> Mesh {
    generate_annulus_mesh(0.5, 1.0, h).unwrap()
}

fn homogeneous_operator(h: f64) -> AffineForwardOperator {
    let mesh = annulus(h);
    let data = ProblemData::constant(&mesh, 1.0, 1.0, 0.0, 0.0).unwrap();
    build_forward_operator(&mesh, data).unwrap()
}

fn random_vec(tag: Tag, n: usize, rng: &mut ChaCha8Rng) -> BoundaryVector {
    BoundaryVector::new(tag, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn fem_convergence() -> Outcome {
    let mut mesh = annulus(0.1);
    let mut errs = Vec::new();
    for _ in 0..4 {
        let data = ProblemData::constant(&mesh, 1.0, 1.0, 0.0, 1.0).unwrap();
        let model = ForwardModel::new(Arc::new(mesh.clone()), data).unwrap();
        let u = model.solve(&BoundaryVector::constant(model.inner(), 2.0)).unwrap();
        errs.push(error_norms(
            &mesh,
            &u,
            |p| p[0].hypot(p[1]).ln(),
            |p| {
                let r2 = p[0] * p[0] + p[1] * p[1];
                [p[0] / r2, p[1] / r2]
            },
        ));
        mesh = refine_uniform(&mesh).unwrap();
    }
    let ratios: Vec<(f64, f64)> = errs.windows(2).map(|w| (w[0].0 / w[1].0, w[0].1 / w[1].1)).collect();
    let ok = ratios
        .iter()
        .all(|&(l2, h1)| (3.5..=4.5).contains(&l2) && (1.8..=2.2).contains(&h1));
    let text: Vec<String> = ratios.iter().map(|(a, b)| format!("{a:.3}/{b:.3}")).collect();
    check(ok, format!("L2/H1 ratios {}", text.join(", ")))
}

fn spectral_fidelity() -> Outcome {
    let basis = build_spectral_basis(&annulus(0.02)).unwrap();
    let l = basis.lambdas();
    let mut worst = 0.0f64;
    let mut pairing = 0.0f64;
    for (i, &lam) in l.iter().take(10).enumerate() {
        let n = (i + 1) / 2;
        let exact = (1.0 + (n as f64 / 0.5).powi(2)).sqrt();
        worst = worst.max((lam - exact).abs() / exact);
        if i % 2 == 1 {
            pairing = pairing.max((l[i + 1] - lam).abs() / lam);
        }
    }
    check(
        worst <= 0.01 && pairing <= 1e-6,
        format!("max relative deviation {worst:.2e}, pair split {pairing:.2e}"),
    )
}

fn adjoint_identity() -> Outcome {
    let op = homogeneous_operator(0.05);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let q = random_vec(Tag::GammaI, op.n_inner(), &mut rng);
        let w = random_vec(Tag::GammaA, op.n_outer(), &mut rng);
        let kq = op.apply_linear(&q).unwrap();
        let lhs = op.outer_l2(&kq, &w);
        let rhs = op.inner_l2(&q, &op.adjoint_apply(&w).unwrap());
        let scale = op.outer_norm(&kq) * op.outer_norm(&w);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    check(worst <= 1e-10, format!("max scaled defect {worst:.2e}"))
}

fn projector_decay() -> Outcome {
    let basis = build_spectral_basis(&annulus(0.05)).unwrap();
    let grid = log_grid(basis.lambdas()[0], 2.0 * basis.lambda_max(), 50);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = f64::INFINITY;
    for k in 0..100 {
        let s = rng.random_range(0.05..=0.5);
        let q = basis.synthesize_flux_with_smoothness(s, 0.01, k).unwrap();
        let report = check_projector_conditions(&basis, &q, s, &grid).unwrap();
        worst = worst.min(report.min_slack);
    }
    check(worst >= -1e-12, format!("min slack {worst:.3e}"))
}

fn tikhonov_optimality() -> Outcome {
    let op = homogeneous_operator(0.05);
    let basis = build_spectral_basis(op.model().mesh()).unwrap();
    let q = basis.synthesize_flux_with_smoothness(0.5, 0.01, 1).unwrap();
    let u = add_noise(op.outer(), &op.apply(&q).unwrap(), 1e-3, 2).unwrap();
    let rho = 1e-4;
    let r = op.tikhonov_solve(&u, rho).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut grad = 0.0f64;
    for _ in 0..5 {
        let d = random_vec(Tag::GammaI, op.n_inner(), &mut rng);
        let d = d.scaled(1.0 / op.inner_norm(&d));
        let t = 1e-4;
        let jp = op.objective(&u, rho, &r.q_rec.axpy(t, &d)).unwrap();
        let jm = op.objective(&u, rho, &r.q_rec.axpy(-t, &d)).unwrap();
        grad = grad.max(((jp - jm) / (2.0 * t)).abs() / op.inner_norm(&r.q_rec).max(1.0));
    }
    let mut prev: Option<TikhonovResult> = None;
    let mut monotone = true;
    for k in 0..20 {
        let r = op.tikhonov_solve(&u, 10f64.powf(-12.0 + 0.8 * k as f64)).unwrap();
        if let Some(p) = &prev {
            monotone &= r.solution_norm <= p.solution_norm + 1e-10 && r.residual_norm >= p.residual_norm - 1e-10;
        }
        prev = Some(r);
    }
    check(grad <= 1e-6 && monotone, format!("relative gradient {grad:.2e}, monotone {monotone}"))
}

fn controlled_recovery() -> Outcome {
    let op = homogeneous_operator(0.05);
    let basis = build_spectral_basis(op.model().mesh()).unwrap();
    let mut coeffs = vec![0.0; basis.len()];
    for (i, c) in [1.0, -0.6, 0.4, 0.3, -0.2].into_iter().enumerate() {
        coeffs[i] = c;
    }
    let q = basis.synthesize(&FluxCoefficients { coeffs }).unwrap();
    let delta = 1e-8;
    let u = add_noise(op.outer(), &op.apply(&q).unwrap(), delta, 11).unwrap();
    let choice = op.choose_rho_discrepancy(&u, delta, 1.5).unwrap();
    let r = op.tikhonov_solve(&u, choice.rho).unwrap();
    let err = op.inner_norm(&r.q_rec.axpy(-1.0, &q)) / op.inner_norm(&q);
    check(err <= 0.1, format!("relative error {err:.3e} at rho {:.2e}", choice.rho))
}

fn vsc_consistency() -> Outcome {
    let mesh = Arc::new(annulus(0.05));
    let data = ProblemData::constant(&mesh, 1.0, 1.0, 0.0, 0.0).unwrap();
    let op = AffineForwardOperator::new(Arc::new(ForwardModel::new(mesh.clone(), data).unwrap())).unwrap();
    let basis = build_spectral_basis(&mesh).unwrap();
    let (s, kappa, m0) = (0.5, 0.9, 10.0);
    let q = basis.synthesize_flux_with_smoothness(s, 0.01, 0).unwrap();
    let cal = generate_admissible_ensemble(&basis, &q, 100, m0, 1).unwrap();
    let eval = generate_admissible_ensemble(&basis, &q, 200, m0, 2).unwrap();
    let spec = fit_vsc_constants(&op, &basis, &q, &cal, s, kappa, m0).unwrap();
    let report = check_vsc_inequality(&op, &basis, &q, &spec, &eval).unwrap();
    let mut slack = spec.clone();
    slack.c *= 1.05;
    let relaxed = check_vsc_inequality(&op, &basis, &q, &slack, &eval).unwrap();
    let (a, b) = (report.fraction_nonnegative(), relaxed.fraction_nonnegative());
    check(a >= 0.95 && b == 1.0, format!("non-negative {:.1}%, at +5% C {:.1}%", 100.0 * a, 100.0 * b))
}

fn rate_study() -> Outcome {
    let cfg = ExperimentConfig::default();
    let report = run_rate_study(&cfg).unwrap();
    let med = report.medians();
    let jitter_ok = med.windows(2).all(|w| w[1].1 <= 1.1 * w[0].1);
    let all_seeds = med.iter().all(|m| m.2 == cfg.seeds.len());
    let ok = jitter_ok && all_seeds && report.p_hat >= 0.5 * report.p_star && report.r_squared >= 0.8;
    check(
        ok,
        format!(
            "p_hat {:.3} (p* {:.3}), r2 {:.3}, medians monotone {jitter_ok}",
            report.p_hat, report.p_star, report.r_squared
        ),
    )
}

fn stability_probe() -> Outcome {
    let kappa = 0.9;
    let fit_on = |mesh: Mesh| {
        let mesh = Arc::new(mesh);
        let data = ProblemData::constant(&mesh, 1.0, 1.0, 0.0, 0.0).unwrap();
        let probe = StabilityProbe::new(mesh, data).unwrap();
        let cal = probe.generate_ensemble(100, 0).unwrap();
        let hold = probe.generate_ensemble(50, 1).unwrap();
        let fit = fit_stability_modulus(&cal, kappa).unwrap();
        (fit.violation_rate(&cal, 0.0), fit.violation_rate(&hold, 0.05), fit.c_fit)
    };
    let coarse = annulus(0.05);
    let fine = refine_uniform(&coarse).unwrap();
    let (cal_rate, hold_rate, c1) = fit_on(coarse);
    let (_, _, c2) = fit_on(fine);
    let ratio = (c1 / c2).max(c2 / c1);
    check(
        cal_rate == 0.0 && hold_rate <= 0.05 && ratio <= 2.0,
        format!("calibration violations {cal_rate}, holdout {hold_rate}, C_fit ratio {ratio:.3}"),
    )
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fluxinv"))
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)))
    }
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "txt") && !p.ends_with("mesh.txt"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = tmp.path();
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let config = p("config.toml");
    std::fs::write(
        &config,
        "s = 0.5\nkappa = 0.9\nseed = 7\n[mesh]\nh = 0.1\n[rates]\nh = 0.1\ndata_refinements = 1\n\
         delta_grid = [1e-2, 1e-3, 1e-4]\nseeds = [0, 1]\n[vsc]\nn_calibration = 60\nn_samples = 60\n\
         [stability]\nn_samples = 60\nn_holdout = 20\n",
    )
    .map_err(|e| e.to_string())?;
    save_mesh(&annulus(0.1), root.join("mesh.txt")).map_err(|e| e.to_string())?;
    let mesh = p("mesh.txt");
    let mut mismatched = Vec::new();
    for run in ["a", "b"] {
        let o = |name: &str| p(&format!("{run}_{name}"));
        run_cli(&["mesh-gen", "--config", &config, "--out", &o("mesh")])?;
        run_cli(&["spectrum", "--mesh", &mesh, "--config", &config, "--s", "0.5", "--seed", "3", "--out", &o("spectrum")])?;
        let flux = format!("{}/flux.csv", o("spectrum"));
        run_cli(&["forward", "--mesh", &mesh, "--config", &config, "--flux", &flux, "--out", &o("forward")])?;
        let trace = format!("{}/trace_gamma_a.csv", o("forward"));
        run_cli(&[
            "invert", "--mesh", &mesh, "--config", &config, "--data-trace", &trace, "--delta", "1e-3", "--seed", "5",
            "--discrepancy", "--true-flux", &flux, "--out", &o("invert"),
        ])?;
        run_cli(&["vsc-check", "--mesh", &mesh, "--config", &config, "--out", &o("vsc")])?;
        run_cli(&["stability-probe", "--mesh", &mesh, "--config", &config, "--out", &o("stability")])?;
        run_cli(&["rates", "--config", &config, "--out-dir", &o("rates")])?;
    }
    let subcommands = ["mesh", "spectrum", "forward", "invert", "vsc", "stability", "rates"];
    for sub in subcommands {
        let a = csv_bytes(&root.join(format!("a_{sub}")));
        let b = csv_bytes(&root.join(format!("b_{sub}")));
        if a.is_empty() || a != b {
            mismatched.push(sub);
        }
    }
    let mesh_a = std::fs::read(root.join("a_mesh/mesh.txt")).map_err(|e| e.to_string())?;
    let mesh_b = std::fs::read(root.join("b_mesh/mesh.txt")).map_err(|e| e.to_string())?;
    if mesh_a != mesh_b {
        mismatched.push("mesh.txt");
    }
    check(
        mismatched.is_empty(),
        format!("{} subcommands compared, mismatched {mismatched:?}", subcommands.len()),
    )
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria = [
        Criterion { name: "fem_convergence", budget: Duration::from_secs(60), run: fem_convergence },
        Criterion { name: "spectral_fidelity", budget: Duration::from_secs(30), run: spectral_fidelity },
        Criterion { name: "adjoint_identity", budget: Duration::MAX, run: adjoint_identity },
        Criterion { name: "projector_decay", budget: Duration::MAX, run: projector_decay },
        Criterion { name: "tikhonov_optimality", budget: Duration::MAX, run: tikhonov_optimality },
        Criterion { name: "controlled_recovery", budget: Duration::from_secs(120), run: controlled_recovery },
        Criterion { name: "vsc_consistency", budget: Duration::from_secs(600), run: vsc_consistency },
        Criterion { name: "rate_study", budget: Duration::from_secs(1200), run: rate_study },
        Criterion { name: "stability_probe", budget: Duration::from_secs(600), run: stability_probe },
        Criterion { name: "reproducibility", budget: Duration::MAX, run: reproducibility },
    ];
    let mut failures = 0;
    for (i, c) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(c.run).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if elapsed <= c.budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {:?} budget", c.budget)),
            Err(d) => (false, d),
        };
        failures += usize::from(!ok);
        println!(
            "criterion {:>2} {:<20} {} ({:.1} s) {detail}",
            i + 1,
            c.name,
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
