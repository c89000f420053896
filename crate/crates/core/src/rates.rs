//! Convergence-rate study: synthesize a flux, generate data on a refined
//! mesh, add noise over a grid of levels, invert on the coarse mesh and fit
//! the logarithmic rate `error ≈ c · log(1/δ)^{−p}`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{transfer_boundary, BoundaryVector, ForwardModel, ProblemData};
use crate::mesh::{generate_annulus_mesh, refine_uniform, Mesh, Tag};
use crate::spectral::build_spectral_basis;
use crate::tikhonov::{add_noise, admissibility_check, AffineForwardOperator};
use crate::vsc::linear_fit;

pub const RATES_CSV: &str = "rates.csv";
pub const PLOTDATA_CSV: &str = "rates_plotdata.csv";
pub const SUMMARY_TXT: &str = "summary.txt";
pub const RATES_HEADER: [&str; 7] = ["delta", "seed", "rho", "error", "residual", "admissible", "status"];
pub const PLOTDATA_HEADER: [&str; 4] = ["delta", "median_error", "model_error", "successful_seeds"];
pub const MIN_FIT_DELTAS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParameterRule {
    Discrepancy { tau: f64 },
    /// `ρ = scale · δ^power`
    Fixed { scale: f64, power: f64 },
}

impl ParameterRule {
    pub fn describe(&self) -> String {
        match self {
            ParameterRule::Discrepancy { tau } => format!("discrepancy (tau_d = {tau})"),
            ParameterRule::Fixed { scale, power } => format!("fixed (rho = {scale} * delta^{power})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemConstants {
    pub alpha: f64,
    pub k: f64,
    pub f: f64,
    pub u_a: f64,
}

impl Default for ProblemConstants {
    fn default() -> Self {
        ProblemConstants { alpha: 1.0, k: 1.0, f: 0.0, u_a: 0.0 }
    }
}

impl ProblemConstants {
    pub fn on(&self, mesh: &Mesh) -> Result<ProblemData> {
        ProblemData::constant(mesh, self.alpha, self.k, self.f, self.u_a)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub r_inner: f64,
    pub r_outer: f64,
    /// Target edge length of the inversion mesh.
    pub h: f64,
    /// Uniform refinements between the inversion mesh and the data mesh.
    pub data_refinements: usize,
    pub problem: ProblemConstants,
    pub s: f64,
    pub kappa: f64,
    pub eps: f64,
    pub m0: f64,
    /// Strictly decreasing noise levels.
    pub delta_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Seed of the synthesized true flux.
    pub flux_seed: u64,
    pub rule: ParameterRule,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            r_inner: 0.5,
            r_outer: 1.0,
            h: 0.025,
            data_refinements: 1,
            problem: ProblemConstants::default(),
            s: 0.5,
            kappa: 0.9,
            eps: 0.01,
            m0: 10.0,
            delta_grid: default_delta_grid(),
            seeds: (0..5).collect(),
            flux_seed: 0,
            rule: ParameterRule::Discrepancy { tau: 1.5 },
        }
    }
}

/// Nine log-spaced levels from `1e-2` down to `1e-6`.
pub fn default_delta_grid() -> Vec<f64> {
    (0..9).map(|i| 10f64.powf(-2.0 - 0.5 * i as f64)).collect()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.data_refinements < 1 {
            return Err(Error::ParameterDomain(
                "data_refinements must be at least 1 so data and inversion meshes differ".into(),
            ));
        }
        self.validate_common()
    }

    fn validate_common(&self) -> Result<()> {
        if self.delta_grid.is_empty() {
            return Err(Error::ParameterDomain("delta_grid is empty".into()));
        }
        if self.delta_grid.iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(Error::ParameterDomain("delta_grid entries must be positive".into()));
        }
        if self.delta_grid.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::ParameterDomain("delta_grid must be strictly decreasing".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::ParameterDomain("at least one seed is required".into()));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::ParameterDomain(format!("kappa = {} must lie in (0, 1)", self.kappa)));
        }
        if !(self.s > 0.0 && self.s <= 0.5) {
            return Err(Error::ParameterDomain(format!("s = {} must lie in (0, 1/2]", self.s)));
        }
        if !(self.eps > 0.0) || !(self.m0 > 0.0) {
            return Err(Error::ParameterDomain("eps and m0 must be positive".into()));
        }
        match self.rule {
            ParameterRule::Discrepancy { tau } if !(tau > 1.0) => {
                Err(Error::ParameterDomain(format!("tau_d = {tau} must exceed 1")))
            }
            ParameterRule::Fixed { scale, .. } if !(scale > 0.0) => {
                Err(Error::ParameterDomain(format!("rho scale = {scale} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// `p* = 2sκ/(1 + 2s)`.
    pub fn theoretical_exponent(&self) -> f64 {
        2.0 * self.s * self.kappa / (1.0 + 2.0 * self.s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RowStatus {
    Ok,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateRow {
    pub delta: f64,
    pub seed: u64,
    pub rho: f64,
    /// `‖q_rec − q†‖_{L²(Γ_i)}`
    pub error: f64,
    pub residual: f64,
    pub admissible: bool,
    pub status: RowStatus,
}

impl RateRow {
    pub fn is_ok(&self) -> bool {
        self.status == RowStatus::Ok
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    pub p_hat: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub p_star: f64,
    pub rule: ParameterRule,
    /// `‖q†‖_{L²(Γ_i)}`
    pub flux_norm: f64,
    /// `‖u†_data − A(q†)‖_{L²(Γ_a)}` between transferred and same-mesh data.
    pub data_mismatch: f64,
}

impl RateReport {
    /// `(delta, median error, successful seeds)` per noise level, descending in delta.
    pub fn medians(&self) -> Vec<(f64, f64, usize)> {
        medians(&self.rows)
    }
}

fn medians(rows: &[RateRow]) -> Vec<(f64, f64, usize)> {
    let mut deltas: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    deltas.sort_by(|a, b| b.total_cmp(a));
    deltas.dedup();
    deltas
        .into_iter()
        .map(|d| {
            let mut e: Vec<f64> = rows
                .iter()
                .filter(|r| r.delta == d && r.is_ok())
                .map(|r| r.error)
                .collect();
            e.sort_by(f64::total_cmp);
            let n = e.len();
            let med = match n {
                0 => f64::NAN,
                _ if n % 2 == 1 => e[n / 2],
                _ => 0.5 * (e[n / 2 - 1] + e[n / 2]),
            };
            (d, med, n)
        })
        .collect()
}

/// Slope fit of `log(median error)` against `log(log(1/δ))`; returns `(p̂, intercept, r²)`.
pub fn fit_log_rate(rows: &[RateRow]) -> Result<(f64, f64, f64)> {
    let pts: Vec<(f64, f64)> = medians(rows)
        .into_iter()
        .filter(|&(d, m, n)| n > 0 && d < 1.0 && m > 0.0)
        .map(|(d, m, _)| ((1.0 / d).ln().ln(), m.ln()))
        .collect();
    if pts.len() < MIN_FIT_DELTAS {
        return Err(Error::InsufficientData(format!(
            "{} noise levels with successful rows, need {MIN_FIT_DELTAS}",
            pts.len()
        )));
    }
    let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (slope, intercept, r2) = linear_fit(&x, &y)?;
    Ok((-slope, intercept, r2))
}

/// Same-mesh variant of [`run_rate_study`], for controlled tests only.
pub fn run_rate_study_same_mesh(config: &ExperimentConfig) -> Result<RateReport> {
    config.validate_common()?;
    run(config, 0)
}

pub fn run_rate_study(config: &ExperimentConfig) -> Result<RateReport> {
    config.validate()?;
    run(config, config.data_refinements)
}

fn run(config: &ExperimentConfig, refinements: usize) -> Result<RateReport> {
    let coarse = Arc::new(generate_annulus_mesh(config.r_inner, config.r_outer, config.h)?);
    let basis = build_spectral_basis(&coarse)?;
    let q_dag = basis.synthesize_flux_with_smoothness(config.s, config.eps, config.flux_seed)?;
    let model = Arc::new(ForwardModel::new(coarse.clone(), config.problem.on(&coarse)?)?);
    let op = AffineForwardOperator::new(model.clone())?;
    let same_mesh = op.apply(&q_dag)?;

    let u_dag = if refinements == 0 {
        same_mesh.clone()
    } else {
        let mut fine = (*coarse).clone();
        for _ in 0..refinements {
            fine = refine_uniform(&fine)?;
        }
        let fine = Arc::new(fine);
        let fine_model = ForwardModel::new(fine.clone(), config.problem.on(&fine)?)?;
        let q_fine = transfer_boundary(&coarse, model.inner(), &q_dag, &fine, fine_model.inner())?;
        let u = fine_model.solve(&q_fine)?;
        let trace = fine_model.trace(&u, Tag::GammaA)?;
        transfer_boundary(&fine, fine_model.outer(), &trace, &coarse, model.outer())?
    };
    let data_mismatch = op.outer_norm(&u_dag.axpy(-1.0, &same_mesh));

    let mut rows = Vec::with_capacity(config.delta_grid.len() * config.seeds.len());
    for &delta in &config.delta_grid {
        for &seed in &config.seeds {
            rows.push(run_row(&op, &basis, &q_dag, &u_dag, delta, data_mismatch, seed, config)?);
        }
    }
    let (p_hat, intercept, r_squared) = match fit_log_rate(&rows) {
        Ok(v) => v,
        Err(Error::InsufficientData(_)) => (f64::NAN, f64::NAN, f64::NAN),
        Err(e) => return Err(e),
    };
    Ok(RateReport {
        rows,
        p_hat,
        intercept,
        r_squared,
        p_star: config.theoretical_exponent(),
        rule: config.rule,
        flux_norm: op.inner_norm(&q_dag),
        data_mismatch,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_row(
    op: &AffineForwardOperator,
    basis: &crate::spectral::SpectralBasis,
    q_dag: &BoundaryVector,
    u_dag: &BoundaryVector,
    delta: f64,
    data_mismatch: f64,
    seed: u64,
    config: &ExperimentConfig,
) -> Result<RateRow> {
    let failed = |msg: String| RateRow {
        delta,
        seed,
        rho: f64::NAN,
        error: f64::NAN,
        residual: f64::NAN,
        admissible: false,
        status: RowStatus::Failed(msg),
    };
    let u_delta = add_noise(op.outer(), u_dag, delta, seed)?;
    let rho = match config.rule {
        ParameterRule::Discrepancy { tau } => match op.choose_rho_discrepancy(&u_delta, delta + data_mismatch, tau) {
            Ok(choice) => choice.rho,
            Err(e @ Error::BracketFailure(_)) => return Ok(failed(e.to_string())),
            Err(e) => return Err(e),
        },
        ParameterRule::Fixed { scale, power } => scale * delta.powf(power),
    };
    let result = match op.tikhonov_solve(&u_delta, rho) {
        Ok(r) => r,
        Err(e @ Error::SolverFailure(_)) => return Ok(failed(e.to_string())),
        Err(e) => return Err(e),
    };
    Ok(RateRow {
        delta,
        seed,
        rho,
        error: op.inner_norm(&result.q_rec.axpy(-1.0, q_dag)),
        residual: result.residual_norm,
        admissible: admissibility_check(&result.q_rec, q_dag, basis, config.m0)?,
        status: RowStatus::Ok,
    })
}

fn status_text(s: &RowStatus) -> String {
    match s {
        RowStatus::Ok => "ok".into(),
        RowStatus::Failed(msg) => format!("failed: {msg}"),
    }
}

fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(buf)
}

fn csv_err(e: csv::Error) -> Error {
    Error::InvalidData(format!("csv: {e}"))
}

pub fn rates_csv(report: &RateReport) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record(RATES_HEADER).map_err(csv_err)?;
        for r in &report.rows {
            w.write_record([
                format!("{:e}", r.delta),
                r.seed.to_string(),
                format!("{:e}", r.rho),
                format!("{:e}", r.error),
                format!("{:e}", r.residual),
                r.admissible.to_string(),
                status_text(&r.status),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::InvalidData(e.to_string()))?;
    }
    Ok(buf)
}

pub fn plotdata_csv(report: &RateReport) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut w = csv_writer(&mut buf);
        w.write_record(PLOTDATA_HEADER).map_err(csv_err)?;
        for (d, med, n) in report.medians() {
            let model = (report.intercept - report.p_hat * (1.0 / d).ln().ln()).exp();
            w.write_record([format!("{d:e}"), format!("{med:e}"), format!("{model:e}"), n.to_string()])
                .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::InvalidData(e.to_string()))?;
    }
    Ok(buf)
}

pub fn summary_text(report: &RateReport) -> String {
    let failed = report.rows.iter().filter(|r| !r.is_ok()).count();
    let inadmissible = report.rows.iter().filter(|r| r.is_ok() && !r.admissible).count();
    format!(
        "p_hat = {:e}\np_star = {:e}\nr_squared = {:e}\nintercept = {:e}\nrule = {}\nrows = {}\nfailed_rows = {}\ninadmissible_rows = {}\nflux_norm = {:e}\ndata_mismatch = {:e}\n",
        report.p_hat,
        report.p_star,
        report.r_squared,
        report.intercept,
        report.rule.describe(),
        report.rows.len(),
        failed,
        inadmissible,
        report.flux_norm,
        report.data_mismatch,
    )
}

/// Writes `rates.csv`, `rates_plotdata.csv` and `summary.txt` into `dir` and returns their paths.
pub fn emit_report(report: &RateReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        (RATES_CSV, rates_csv(report)?),
        (PLOTDATA_CSV, plotdata_csv(report)?),
        (SUMMARY_TXT, summary_text(report).into_bytes()),
    ];
    let mut paths = Vec::new();
    for (name, bytes) in files {
        let path = dir.join(name);
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Parses a `rates.csv` produced by [`emit_report`].
pub fn read_rates_csv(path: &Path) -> Result<Vec<RateRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_rates_csv(&text, path)
}

pub fn parse_rates_csv(text: &str, origin: &Path) -> Result<Vec<RateRow>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::malformed(origin, 1, e.to_string()))?;
    if header.iter().ne(RATES_HEADER) {
        return Err(Error::malformed(origin, 1, "unexpected rates.csv header"));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::malformed(origin, line, e.to_string()))?;
        if rec.len() != RATES_HEADER.len() {
            return Err(Error::malformed(origin, line, "wrong number of fields"));
        }
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .parse::<f64>()
                .map_err(|_| Error::malformed(origin, line, format!("cannot parse `{}`", &rec[j])))
        };
        let status = match &rec[6] {
            "ok" => RowStatus::Ok,
            s => match s.strip_prefix("failed: ") {
                Some(msg) => RowStatus::Failed(msg.to_string()),
                None => return Err(Error::malformed(origin, line, format!("unknown status `{s}`"))),
            },
        };
        rows.push(RateRow {
            delta: num(0)?,
            seed: rec[1]
                .parse()
                .map_err(|_| Error::malformed(origin, line, format!("cannot parse seed `{}`", &rec[1])))?,
            rho: num(2)?,
            error: num(3)?,
            residual: num(4)?,
            admissible: rec[5]
                .parse()
                .map_err(|_| Error::malformed(origin, line, format!("cannot parse flag `{}`", &rec[5])))?,
            status,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_rows(p: f64, deltas: &[f64]) -> Vec<RateRow> {
        deltas
            .iter()
            .flat_map(|&d| {
                (0..3).map(move |seed| RateRow {
                    delta: d,
                    seed,
                    rho: 1e-3,
                    error: 0.7 * (1.0 / d).ln().powf(-p),
                    residual: d,
                    admissible: true,
                    status: RowStatus::Ok,
                })
            })
            .collect()
    }

    #[test]
    fn fit_recovers_model_exponent() {
        let rows = model_rows(0.45, &default_delta_grid());
        let (p, c, r2) = fit_log_rate(&rows).unwrap();
        assert!((p - 0.45).abs() <= 1e-6);
        assert!((c - 0.7f64.ln()).abs() <= 1e-6);
        assert!(r2 > 0.999_999);
    }

    #[test]
    fn constant_error_gives_zero_exponent() {
        let mut rows = model_rows(0.45, &default_delta_grid());
        rows.iter_mut().for_each(|r| r.error = 0.2);
        let (p, _, _) = fit_log_rate(&rows).unwrap();
        assert!(p.abs() < 1e-12);
    }

    #[test]
    fn failed_rows_are_excluded() {
        let grid = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
        let mut rows = model_rows(0.3, &grid);
        for r in rows.iter_mut().filter(|r| r.delta == 1e-6) {
            r.status = RowStatus::Failed("bracket".into());
            r.error = f64::NAN;
        }
        let (p, _, _) = fit_log_rate(&rows).unwrap();
        assert!((p - 0.3).abs() < 1e-9);
        for r in rows.iter_mut().filter(|r| r.delta == 1e-5) {
            r.status = RowStatus::Failed("bracket".into());
        }
        assert!(matches!(fit_log_rate(&rows), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn config_guards() {
        let mut c = ExperimentConfig::default();
        c.validate().unwrap();
        c.data_refinements = 0;
        assert!(c.validate().is_err());
        c.data_refinements = 1;
        c.delta_grid = vec![1e-3, 1e-2];
        assert!(c.validate().is_err());
        assert!((ExperimentConfig::default().theoretical_exponent() - 0.45).abs() < 1e-15);
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            h: 0.1,
            delta_grid: vec![1e-2, 1e-3],
            seeds: vec![4, 5, 6],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn rows_differ_only_by_seed() {
        let mut c = small_config();
        c.delta_grid = vec![1e-3];
        let report = run_rate_study(&c).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert!(report.rows.iter().all(|r| r.delta == 1e-3 && r.is_ok()));
        let seeds: Vec<u64> = report.rows.iter().map(|r| r.seed).collect();
        assert_eq!(seeds, vec![4, 5, 6]);
        assert!(report.p_hat.is_nan());
        assert_eq!(run_rate_study(&c).unwrap().rows, report.rows);
    }

    #[test]
    fn emitted_csv_round_trips() {
        let mut report = run_rate_study(&small_config()).unwrap();
        report.rows.push(RateRow {
            delta: 1e-9,
            seed: 1,
            rho: f64::NAN,
            error: f64::NAN,
            residual: f64::NAN,
            admissible: false,
            status: RowStatus::Failed("bracket, \"quoted\"".into()),
        });
        let dir = tempfile::tempdir().unwrap();
        let paths = emit_report(&report, dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        let back = read_rates_csv(&paths[0]).unwrap();
        assert_eq!(back.len(), report.rows.len());
        for (a, b) in back.iter().zip(&report.rows) {
            assert_eq!(a.delta.to_bits(), b.delta.to_bits());
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.error.is_nan(), b.error.is_nan());
            if !a.error.is_nan() {
                assert_eq!(a.error.to_bits(), b.error.to_bits());
                assert_eq!(a.rho.to_bits(), b.rho.to_bits());
                assert_eq!(a.residual.to_bits(), b.residual.to_bits());
            }
            assert_eq!(a.status, b.status);
            assert_eq!(a.admissible, b.admissible);
        }
        let text = fs::read_to_string(&paths[0]).unwrap();
        assert_eq!(text.lines().next().unwrap(), "delta,seed,rho,error,residual,admissible,status");
        assert!(!text.contains('\r'));
        let plot = fs::read_to_string(&paths[1]).unwrap();
        assert_eq!(plot.lines().next().unwrap(), "delta,median_error,model_error,successful_seeds");
    }
}
