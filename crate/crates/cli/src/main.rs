use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use fluxinv::config::{parse_config, Config};
use fluxinv::fem::{norms, BoundaryVector, ForwardModel};
use fluxinv::mesh::{generate_annulus_mesh, load_mesh, refine_uniform, save_mesh, Mesh, Tag};
use fluxinv::rates::{emit_report, run_rate_study};
use fluxinv::spectral::build_spectral_basis;
use fluxinv::stability::{fit_stability_modulus, near_uniqueness_check, StabilityProbe};
use fluxinv::tikhonov::{add_noise, admissibility_check, AffineForwardOperator};
use fluxinv::vsc::{check_vsc_inequality, fit_vsc_constants, generate_admissible_ensemble};
use fluxinv::{Error, Result};

mod output;

use output::{num, read_boundary, Manifest, OutDir};

#[derive(Parser)]
#[command(name = "fluxinv", version, about = "Boundary flux reconstruction on an annulus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mesh file; generated from the [mesh] section when omitted
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an annulus mesh
    MeshGen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        r_inner: Option<f64>,
        #[arg(long)]
        r_outer: Option<f64>,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        refinements: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve the forward problem and write the boundary traces
    Forward {
        #[command(flatten)]
        common: Common,
        /// Flux on the inner boundary as a boundary CSV; zero when omitted
        #[arg(long)]
        flux: Option<PathBuf>,
    },
    /// Eigenvalues of the boundary operator on the inner loop
    Spectrum {
        #[command(flatten)]
        common: Common,
        /// Also synthesize a flux of this smoothness
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Tikhonov reconstruction of the inner flux from an outer trace
    Invert {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data_trace: PathBuf,
        /// Noise level; required by --discrepancy and --seed
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, conflicts_with = "discrepancy", required_unless_present = "discrepancy")]
        rho: Option<f64>,
        #[arg(long)]
        discrepancy: bool,
        /// Add noise of level --delta drawn with this seed before inverting
        #[arg(long)]
        seed: Option<u64>,
        /// True flux, enables the error and admissibility columns
        #[arg(long)]
        true_flux: Option<PathBuf>,
    },
    /// Fit and check the variational source condition
    VscCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit the logarithmic stability modulus
    StabilityProbe {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Convergence-rate study
    Rates {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, alias = "out")]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_input_error() {
        2
    } else {
        1
    }
}

fn load_config(path: Option<&Path>, manifest_inputs: &mut Vec<PathBuf>) -> Result<Config> {
    match path {
        Some(p) => {
            manifest_inputs.push(p.to_path_buf());
            parse_config(p)
        }
        None => Ok(Config::default()),
    }
}

fn domain(name: &str, ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::ParameterDomain(format!("{name} {msg}")))
    }
}

fn check_kappa(k: f64) -> Result<()> {
    domain("kappa", k > 0.0 && k < 1.0, "must lie in (0, 1)")
}

fn check_s(s: f64) -> Result<()> {
    domain("s", s > 0.0 && s <= 0.5, "must lie in (0, 1/2]")
}

fn mesh_for(common: &Common, cfg: &Config, inputs: &mut Vec<PathBuf>) -> Result<Mesh> {
    match &common.mesh {
        Some(p) => {
            inputs.push(p.clone());
            load_mesh(p)
        }
        None => {
            let mut m = generate_annulus_mesh(cfg.mesh.r_inner, cfg.mesh.r_outer, cfg.mesh.h)?;
            for _ in 0..cfg.mesh.refinements {
                m = refine_uniform(&m)?;
            }
            Ok(m)
        }
    }
}

fn config_json(cfg: &Config) -> serde_json::Value {
    serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null)
}

struct Run {
    manifest: Manifest,
    inputs: Vec<PathBuf>,
    out: OutDir,
    start: Instant,
}

impl Run {
    fn new(name: &str, cfg: &Config, inputs: Vec<PathBuf>, out: &Path) -> Result<Self> {
        Ok(Run {
            manifest: Manifest::new(name, config_json(cfg)),
            inputs,
            out: OutDir::create(out)?,
            start: Instant::now(),
        })
    }

    fn finish(mut self) -> Result<()> {
        for p in &self.inputs {
            self.manifest.input(p)?;
        }
        self.manifest.runtime = self.start.elapsed();
        self.out.finish(self.manifest)
    }
}

fn run(command: Command) -> Result<()> {
    let mut inputs = Vec::new();
    match command {
        Command::MeshGen { config, r_inner, r_outer, h, refinements, out } => {
            let mut cfg = load_config(config.as_deref(), &mut inputs)?;
            cfg.mesh.r_inner = r_inner.unwrap_or(cfg.mesh.r_inner);
            cfg.mesh.r_outer = r_outer.unwrap_or(cfg.mesh.r_outer);
            cfg.mesh.h = h.unwrap_or(cfg.mesh.h);
            cfg.mesh.refinements = refinements.unwrap_or(cfg.mesh.refinements);
            let mut mesh = generate_annulus_mesh(cfg.mesh.r_inner, cfg.mesh.r_outer, cfg.mesh.h)?;
            for _ in 0..cfg.mesh.refinements {
                mesh = refine_uniform(&mesh)?;
            }
            let mut run = Run::new("mesh-gen", &cfg, inputs, &out)?;
            let path = run.out.path("mesh.txt");
            save_mesh(&mesh, &path)?;
            run.out.adopt([path]);
            run.out.csv(
                "mesh_stats.csv",
                "vertices,triangles,boundary_edges,h_max,area",
                [vec![
                    mesh.n_vertices().to_string(),
                    mesh.n_triangles().to_string(),
                    mesh.boundary_edges().len().to_string(),
                    num(mesh.h()),
                    num(mesh.area()),
                ]],
            )?;
            run.finish()
        }
        Command::Forward { common, flux } => {
            let cfg = load_config(common.config.as_deref(), &mut inputs)?;
            let mesh = Arc::new(mesh_for(&common, &cfg, &mut inputs)?);
            let model = ForwardModel::new(mesh.clone(), cfg.problem_data(&mesh)?)?;
            let q = match &flux {
                Some(p) => {
                    inputs.push(p.clone());
                    read_boundary(p, model.inner())?
                }
                None => BoundaryVector::zeros(model.inner()),
            };
            let u = model.solve(&q)?;
            let mut run = Run::new("forward", &cfg, inputs, &common.out)?;
            run.out.boundary("trace_gamma_a.csv", model.outer(), &model.trace(&u, Tag::GammaA)?)?;
            run.out.boundary("trace_gamma_i.csv", model.inner(), &model.trace(&u, Tag::GammaI)?)?;
            let v = mesh.vertices();
            run.out.csv(
                "solution.csv",
                "vertex,x,y,u",
                u.values()
                    .iter()
                    .enumerate()
                    .map(|(i, &val)| vec![i.to_string(), num(v[i][0]), num(v[i][1]), num(val)]),
            )?;
            let (l2, h1) = norms(&mesh, &u);
            run.out.csv("norms.csv", "l2,h1", [vec![num(l2), num(h1)]])?;
            run.finish()
        }
        Command::Spectrum { common, s, seed } => {
            let mut cfg = load_config(common.config.as_deref(), &mut inputs)?;
            let mesh = mesh_for(&common, &cfg, &mut inputs)?;
            let basis = build_spectral_basis(&mesh)?;
            let mut run = Run::new("spectrum", &cfg, Vec::new(), &common.out)?;
            let mu = basis.laplace_beltrami_eigenvalues();
            run.out.csv(
                "spectrum.csv",
                "n,lambda,laplace_beltrami",
                basis
                    .lambdas()
                    .iter()
                    .enumerate()
                    .map(|(n, &l)| vec![n.to_string(), num(l), num(mu[n])]),
            )?;
            if let Some(s) = s {
                check_s(s)?;
                cfg.s = s;
                cfg.seed = seed.unwrap_or(cfg.seed);
                let q = basis.synthesize_flux_with_smoothness(cfg.s, cfg.eps, cfg.seed)?;
                run.out.boundary("flux.csv", basis.map(), &q)?;
                run.manifest.seed("flux", cfg.seed);
            }
            run.manifest.config = config_json(&cfg);
            run.inputs = inputs;
            run.finish()
        }
        Command::Invert { common, data_trace, delta, rho, discrepancy, seed, true_flux } => {
            let cfg = load_config(common.config.as_deref(), &mut inputs)?;
            let mesh = Arc::new(mesh_for(&common, &cfg, &mut inputs)?);
            let model = Arc::new(ForwardModel::new(mesh.clone(), cfg.problem_data(&mesh)?)?);
            let op = AffineForwardOperator::new(model.clone())?;
            inputs.push(data_trace.clone());
            let mut u = read_boundary(&data_trace, model.outer())?;
            if let Some(d) = delta {
                domain("delta", d > 0.0 && d.is_finite(), "must be positive")?;
            }
            if let Some(sd) = seed {
                let d = delta.ok_or_else(|| Error::ParameterDomain("--seed needs --delta".into()))?;
                u = add_noise(model.outer(), &u, d, sd)?;
            }
            let rho = match rho {
                Some(r) => r,
                None => {
                    let d = delta.ok_or_else(|| Error::ParameterDomain("--discrepancy needs --delta".into()))?;
                    debug_assert!(discrepancy);
                    op.choose_rho_discrepancy(&u, d, cfg.tau_d)?.rho
                }
            };
            let mut result = op.tikhonov_solve(&u, rho)?;
            let mut error = None;
            if let Some(p) = &true_flux {
                inputs.push(p.clone());
                let q_dag = read_boundary(p, model.inner())?;
                let basis = build_spectral_basis(&mesh)?;
                result.admissible = Some(admissibility_check(&result.q_rec, &q_dag, &basis, cfg.m0)?);
                error = Some(op.inner_norm(&result.q_rec.axpy(-1.0, &q_dag)));
            }
            let mut run = Run::new("invert", &cfg, inputs, &common.out)?;
            if let Some(sd) = seed {
                run.manifest.seed("noise", sd);
            }
            run.out.csv(
                "result.csv",
                "rho,residual_norm,solution_norm,normal_residual,iterations,admissible,error",
                [vec![
                    num(result.rho),
                    num(result.residual_norm),
                    num(result.solution_norm),
                    num(result.normal_residual),
                    result.iterations.to_string(),
                    result.admissible.map_or("unknown".into(), |a| a.to_string()),
                    error.map_or("unknown".into(), num),
                ]],
            )?;
            run.out.boundary("flux.csv", model.inner(), &result.q_rec)?;
            run.finish()
        }
        Command::VscCheck { common, s, kappa, n_samples, seed } => {
            let mut cfg = load_config(common.config.as_deref(), &mut inputs)?;
            if let Some(s) = s {
                check_s(s)?;
                cfg.s = s;
            }
            if let Some(k) = kappa {
                check_kappa(k)?;
                cfg.kappa = k;
            }
            cfg.vsc.n_samples = n_samples.unwrap_or(cfg.vsc.n_samples);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let mesh = Arc::new(mesh_for(&common, &cfg, &mut inputs)?);
            let model = Arc::new(ForwardModel::new(mesh.clone(), cfg.problem_data(&mesh)?)?);
            let op = AffineForwardOperator::new(model)?;
            let basis = build_spectral_basis(&mesh)?;
            let q_dag = basis.synthesize_flux_with_smoothness(cfg.s, cfg.eps, cfg.seed)?;
            let (cal_seed, eval_seed) = (cfg.seed.wrapping_add(1), cfg.seed.wrapping_add(2));
            let cal = generate_admissible_ensemble(&basis, &q_dag, cfg.vsc.n_calibration, cfg.m0, cal_seed)?;
            let eval = generate_admissible_ensemble(&basis, &q_dag, cfg.vsc.n_samples, cfg.m0, eval_seed)?;
            let spec = fit_vsc_constants(&op, &basis, &q_dag, &cal, cfg.s, cfg.kappa, cfg.m0)?;
            let report = check_vsc_inequality(&op, &basis, &q_dag, &spec, &eval)?;
            let mut slack_spec = spec.clone();
            slack_spec.c *= 1.05;
            let slack = check_vsc_inequality(&op, &basis, &q_dag, &slack_spec, &eval)?;

            let mut run = Run::new("vsc-check", &cfg, inputs, &common.out)?;
            run.manifest.seed("flux", cfg.seed);
            run.manifest.seed("calibration", cal_seed);
            run.manifest.seed("evaluation", eval_seed);
            run.out.csv(
                "vsc.csv",
                "sample_id,lhs,rhs,margin,misfit,admissible",
                report.rows.iter().map(|r| {
                    vec![
                        r.id.to_string(),
                        num(r.lhs),
                        num(r.rhs),
                        num(r.margin),
                        num(r.misfit),
                        r.admissible.to_string(),
                    ]
                }),
            )?;
            let summary = format!(
                "C = {}\nC0 = {}\nM = {}\ncprime = {}\ng0 = {}\nkappa = {}\ns = {}\nbeta = {}\ncalibration_samples = {}\nevaluation_samples = {}\nmin_margin = {}\nfraction_nonnegative = {}\nfraction_nonnegative_c_plus_5pct = {}\nholds = {}\n",
                num(spec.c),
                num(spec.c0),
                num(spec.m),
                num(spec.cprime),
                num(spec.g0),
                spec.kappa,
                spec.s,
                spec.beta,
                cal.len(),
                eval.len(),
                num(report.min_margin),
                report.fraction_nonnegative(),
                slack.fraction_nonnegative(),
                report.holds,
            );
            run.out.write("vsc_summary.txt", summary.as_bytes())?;
            run.finish()
        }
        Command::StabilityProbe { common, kappa, n_samples, seed } => {
            let mut cfg = load_config(common.config.as_deref(), &mut inputs)?;
            if let Some(k) = kappa {
                check_kappa(k)?;
                cfg.kappa = k;
            }
            cfg.stability.n_samples = n_samples.unwrap_or(cfg.stability.n_samples);
            cfg.seed = seed.unwrap_or(cfg.seed);
            let mesh = Arc::new(mesh_for(&common, &cfg, &mut inputs)?);
            let probe = StabilityProbe::new(mesh.clone(), cfg.homogeneous_data(&mesh)?)?;
            let holdout_seed = cfg.seed.wrapping_add(1);
            let cal = probe.generate_ensemble(cfg.stability.n_samples, cfg.seed)?;
            let hold = probe.generate_ensemble(cfg.stability.n_holdout, holdout_seed)?;
            let fit = fit_stability_modulus(&cal, cfg.kappa)?;
            let nu = near_uniqueness_check(&cal);

            let mut run = Run::new("stability-probe", &cfg, inputs, &common.out)?;
            run.manifest.seed("calibration", cfg.seed);
            run.manifest.seed("holdout", holdout_seed);
            let rows = cal
                .iter()
                .map(|s| ("calibration", s))
                .chain(hold.iter().map(|s| ("holdout", s)))
                .enumerate()
                .map(|(i, (set, s))| {
                    let bound = fit.bound(s.m_proxy, s.trace_norm);
                    vec![
                        i.to_string(),
                        set.to_string(),
                        num(s.trace_norm),
                        num(s.h1_norm),
                        num(s.m_proxy),
                        bound.map_or("NaN".into(), num),
                        bound.map_or("NaN".into(), |b| num(b - s.h1_norm)),
                    ]
                });
            run.out.csv("stability.csv", "sample_id,set,trace_norm,h1_norm,m_proxy,bound,slack", rows)?;
            let summary = format!(
                "C_fit = {}\nC0_fit = {}\nkappa = {}\nmax_violation = {}\nholdout_violation_rate = {}\nholdout_violation_rate_c_plus_5pct = {}\nenvelope_monotone = {}\nsmallest_trace_below_median = {}\ntrace_decades = {}\n",
                num(fit.c_fit),
                num(fit.c0_fit),
                fit.kappa,
                num(fit.max_violation),
                fit.violation_rate(&hold, 0.0),
                fit.violation_rate(&hold, 0.05),
                nu.envelope_monotone,
                nu.smallest_trace_below_median,
                nu.decade_envelope.len(),
            );
            run.out.write("stability_summary.txt", summary.as_bytes())?;
            run.finish()
        }
        Command::Rates { config, out_dir, seed } => {
            let mut cfg = load_config(config.as_deref(), &mut inputs)?;
            cfg.seed = seed.unwrap_or(cfg.seed);
            let exp = cfg.experiment_config()?;
            let report = run_rate_study(&exp)?;
            let mut run = Run::new("rates", &cfg, inputs, &out_dir)?;
            run.manifest.seed("flux", exp.flux_seed);
            for s in &exp.seeds {
                run.manifest.seed(&format!("noise_{s}"), *s);
            }
            let paths = emit_report(&report, &out_dir)?;
            run.out.adopt(paths);
            run.finish()
        }
    }
}
