//! Logarithmic index functions and empirical checks of the variational
//! source condition
//!
//! ```text
//!   ¼‖q − q†‖² ≤ ½‖q‖² − ½‖q†‖² + Ψ(‖A(q†) − A(q)‖)
//! ```
//!
//! where
//!
//! ```text
//!   Ψ0(t) = C·M / log(C0·M/t)^κ                  for 0 < t ≤ c′M
//!   Ψ(t)  = inf_λ  g(λ) Ψ0(t) + coef · f(λ)²
//!   f(λ)  = λ^{−s} ‖q†‖_{D(𝒜^s)},  g(λ) = g0 λ^{1/2−s}
//!   Θ(λ)  = coef · f(λ)² / g(λ),   coef = (Ĉ + 1)² / (2(1 − β)).
//! ```
//!
//! The constants exist but are not constructive, so [`fit_vsc_constants`]
//! calibrates them on one ensemble and [`check_vsc_inequality`] evaluates the
//! inequality on another.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fem::BoundaryVector;
use crate::spectral::{FluxCoefficients, SpectralBasis};
use crate::tikhonov::{admissibility_check, AffineForwardOperator};

pub const LAMBDA_GRID_POINTS: usize = 400;
pub const LAMBDA_GRID_EXTENSION: f64 = 1e3;
/// Smallest data misfit fed to an index function.
pub const T_FLOOR: f64 = 1e-300;
/// Relative step of the grid on which fitted constants are rounded up.
pub const CONSTANT_GRID_STEP: f64 = 0.01;
const MARGIN_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    Psi0Log,
    PsiInfimum,
    PowerLaw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexFunctionSpec {
    pub kind: IndexKind,
    pub c: f64,
    pub c0: f64,
    pub m: f64,
    pub kappa: f64,
    pub s: f64,
    pub cprime: f64,
    /// `‖q†‖_{D(𝒜^s)}`, the scale of `f`.
    pub f_norm: f64,
    pub g0: f64,
    pub beta: f64,
    pub c_hat: f64,
    /// Grid for the infimum in `Ψ`.
    pub lambda_grid: Vec<f64>,
}

impl IndexFunctionSpec {
    /// A `Ψ0` spec with `f`, `g` scales and `β`, `Ĉ` at their defaults.
    pub fn log(c: f64, c0: f64, m: f64, kappa: f64, cprime: f64) -> Self {
        IndexFunctionSpec {
            kind: IndexKind::Psi0Log,
            c,
            c0,
            m,
            kappa,
            s: 0.5,
            cprime,
            f_norm: 1.0,
            g0: 1.0,
            beta: 0.5,
            c_hat: 0.0,
            lambda_grid: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("C", self.c),
            ("C0", self.c0),
            ("M", self.m),
            ("cprime", self.cprime),
            ("g0", self.g0),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::ParameterDomain(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::ParameterDomain(format!("kappa = {} must lie in (0, 1)", self.kappa)));
        }
        if !(self.s > 0.0 && self.s <= 0.5) {
            return Err(Error::ParameterDomain(format!("s = {} must lie in (0, 1/2]", self.s)));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::ParameterDomain(format!("beta = {} must lie in (0, 1)", self.beta)));
        }
        if !(self.f_norm >= 0.0) || !(self.c_hat >= 0.0) {
            return Err(Error::ParameterDomain("f_norm and C-hat must be non-negative".into()));
        }
        if self.kind == IndexKind::Psi0Log || self.kind == IndexKind::PsiInfimum {
            let ratio = self.c0 / self.cprime;
            if !(ratio > (self.kappa + 1.0).exp()) {
                return Err(Error::ParameterDomain(format!(
                    "C0/c' = {ratio} must exceed e^(kappa+1) = {}",
                    (self.kappa + 1.0).exp()
                )));
            }
        }
        Ok(())
    }

    pub fn coefficient(&self) -> f64 {
        (self.c_hat + 1.0).powi(2) / (2.0 * (1.0 - self.beta))
    }

    pub fn f(&self, lambda: f64) -> f64 {
        lambda.powf(-self.s) * self.f_norm
    }

    pub fn g(&self, lambda: f64) -> f64 {
        self.g0 * lambda.powf(0.5 - self.s)
    }

    /// `c′M`, where the logarithmic branch of `Ψ0` meets its linear extension.
    pub fn junction(&self) -> f64 {
        self.cprime * self.m
    }

    /// Evaluates the function selected by `kind`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        match self.kind {
            IndexKind::Psi0Log => psi0_eval(self, t),
            IndexKind::PsiInfimum => psi_infimum(self, t, &self.lambda_grid).map(|(v, _)| v),
            IndexKind::PowerLaw => {
                check_t(t)?;
                Ok(self.c * t.powf(self.kappa))
            }
        }
    }

    /// Enlarges `C0` by `factor > 1` and `C` just enough that `Ψ0` does not decrease on `(0, c′M]`.
    pub fn enlarged(&self, factor: f64) -> Self {
        let base = (self.c0 / self.cprime).ln();
        let mut out = self.clone();
        out.c0 *= factor;
        out.c *= (1.0 + factor.ln() / base).powf(self.kappa);
        out
    }
}

fn check_t(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::OutOfRange { value: t, lo: 0.0, hi: f64::INFINITY });
    }
    Ok(())
}

/// `Ψ0(t)`, logarithmic up to `c′M` and continued linearly with matched slope.
pub fn psi0_eval(spec: &IndexFunctionSpec, t: f64) -> Result<f64> {
    spec.validate()?;
    check_t(t)?;
    let cm = spec.c * spec.m;
    let log_branch = |t: f64| cm / (spec.c0 * spec.m / t).ln().powf(spec.kappa);
    let tj = spec.junction();
    if t <= tj {
        return Ok(log_branch(t));
    }
    let l = (spec.c0 * spec.m / tj).ln();
    let slope = cm * spec.kappa * l.powf(-spec.kappa - 1.0) / tj;
    Ok(log_branch(tj) + slope * (t - tj))
}

/// `Ψ(t)` as a minimum over `lambda_grid`, returned with the minimizing `λ`.
pub fn psi_infimum(spec: &IndexFunctionSpec, t: f64, lambda_grid: &[f64]) -> Result<(f64, f64)> {
    if lambda_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let p0 = psi0_eval(spec, t)?;
    let coef = spec.coefficient();
    let mut best = (f64::INFINITY, lambda_grid[0]);
    for &lambda in lambda_grid {
        let v = spec.g(lambda) * p0 + coef * spec.f(lambda).powi(2);
        if v < best.0 {
            best = (v, lambda);
        }
    }
    Ok(best)
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// The default infimum grid `[λ_1, 10³ λ_max]`.
pub fn default_lambda_grid(basis: &SpectralBasis) -> Vec<f64> {
    log_grid(basis.lambdas()[0], basis.lambda_max() * LAMBDA_GRID_EXTENSION, LAMBDA_GRID_POINTS)
}

/// `Θ(λ) = coef · f(λ)² / g(λ)`.
pub fn theta(spec: &IndexFunctionSpec, lambda: f64) -> f64 {
    spec.coefficient() * spec.f(lambda).powi(2) / spec.g(lambda)
}

/// Solves `Θ(λ) = y` on `[lambda_lo, lambda_hi]` by bisection in `log λ`.
pub fn theta_inverse(spec: &IndexFunctionSpec, y: f64, lambda_lo: f64, lambda_hi: f64) -> Result<f64> {
    let hi_val = theta(spec, lambda_lo);
    let lo_val = theta(spec, lambda_hi);
    let tol = 1e-12;
    if !(y >= lo_val * (1.0 - tol) && y <= hi_val * (1.0 + tol)) {
        return Err(Error::OutOfRange { value: y, lo: lo_val, hi: hi_val });
    }
    let (mut a, mut b) = (lambda_lo.ln(), lambda_hi.ln());
    let (mut fa, mut fb) = (hi_val, lo_val);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = theta(spec, mid.exp());
        if !(fm <= fa && fm >= fb) {
            return Err(Error::InvalidData("Θ is not decreasing on the bracket".into()));
        }
        if ((fm - y) / y).abs() <= 1e-12 || b - a < 1e-15 {
            return Ok(mid.exp());
        }
        if fm > y {
            a = mid;
            fa = fm;
        } else {
            b = mid;
            fb = fm;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectorRow {
    pub lambda: f64,
    /// `‖(I − P_λ) q†‖`
    pub lhs: f64,
    /// `f(λ) = λ^{−s} ‖q†‖_{D(𝒜^s)}`
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorReport {
    pub rows: Vec<ProjectorRow>,
    pub min_slack: f64,
}

pub fn check_projector_conditions(basis: &SpectralBasis, q_dag: &BoundaryVector, s: f64, lambda_grid: &[f64]) -> Result<ProjectorReport> {
    let c = basis.analyze(q_dag)?;
    let norm_s = basis.sobolev_norm_coeffs(s, &c);
    let lambdas = basis.lambdas();
    let rows: Vec<ProjectorRow> = lambda_grid
        .iter()
        .map(|&lambda| {
            let tail: f64 = lambdas
                .iter()
                .zip(&c.coeffs)
                .filter(|(&ln, _)| ln > lambda)
                .map(|(_, x)| x * x)
                .sum();
            let lhs = tail.sqrt();
            let rhs = lambda.powf(-s) * norm_s;
            ProjectorRow { lambda, lhs, rhs, slack: rhs - lhs }
        })
        .collect();
    let min_slack = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    Ok(ProjectorReport { rows, min_slack })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VscRow {
    pub id: usize,
    /// `¼‖q − q†‖²`
    pub lhs: f64,
    /// `½‖q‖² − ½‖q†‖² + Ψ(t)`
    pub rhs: f64,
    pub margin: f64,
    /// `‖A(q†) − A(q)‖`
    pub misfit: f64,
    pub admissible: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VscReport {
    pub rows: Vec<VscRow>,
    pub min_margin: f64,
    pub scale: f64,
    pub holds: bool,
}

impl VscReport {
    pub fn fraction_nonnegative(&self) -> f64 {
        if self.rows.is_empty() {
            return 1.0;
        }
        self.rows.iter().filter(|r| r.margin >= 0.0).count() as f64 / self.rows.len() as f64
    }
}

/// Quantities of one sample that do not depend on the index function.
#[derive(Debug, Clone, Copy)]
struct SampleTerms {
    lhs: f64,
    norm_diff: f64,
    misfit: f64,
}

fn sample_terms(op: &AffineForwardOperator, q_dag: &BoundaryVector, q: &BoundaryVector) -> Result<SampleTerms> {
    let d = q.axpy(-1.0, q_dag);
    let kd = op.apply_linear(&d)?;
    let nq = op.inner_norm(q);
    let nd = op.inner_norm(q_dag);
    Ok(SampleTerms {
        lhs: 0.25 * op.inner_norm(&d).powi(2),
        norm_diff: 0.5 * nq * nq - 0.5 * nd * nd,
        misfit: op.outer_norm(&kd),
    })
}

fn psi_of(spec: &IndexFunctionSpec, t: f64) -> Result<f64> {
    let t = t.max(T_FLOOR);
    match spec.kind {
        IndexKind::Psi0Log => psi0_eval(spec, t),
        _ => spec.eval(t),
    }
}

pub fn check_vsc_inequality(
    op: &AffineForwardOperator,
    basis: &SpectralBasis,
    q_dag: &BoundaryVector,
    spec: &IndexFunctionSpec,
    samples: &[BoundaryVector],
) -> Result<VscReport> {
    spec.validate()?;
    let mut rows = Vec::with_capacity(samples.len());
    let mut scale: f64 = 0.5 * op.inner_norm(q_dag).powi(2);
    for (id, q) in samples.iter().enumerate() {
        if !admissibility_check(q, q_dag, basis, spec.m)? {
            return Err(Error::InadmissibleSample(id));
        }
        let terms = sample_terms(op, q_dag, q)?;
        let psi = psi_of(spec, terms.misfit)?;
        let rhs = terms.norm_diff + psi;
        scale = scale.max(terms.lhs).max(terms.norm_diff.abs());
        rows.push(VscRow {
            id,
            lhs: terms.lhs,
            rhs,
            margin: rhs - terms.lhs,
            misfit: terms.misfit,
            admissible: true,
        });
    }
    let min_margin = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    Ok(VscReport {
        holds: min_margin >= -MARGIN_RTOL * scale,
        rows,
        min_margin,
        scale,
    })
}

/// Operator norm of `K` from `H^{1/2}(Γ_i)` to `L²(Γ_a)`, by power iteration in coefficient space.
pub fn half_to_l2_norm(op: &AffineForwardOperator, basis: &SpectralBasis) -> Result<f64> {
    let lambdas = basis.lambdas();
    let n = lambdas.len();
    let weights: Vec<f64> = lambdas.iter().map(|l| l.powf(-0.5)).collect();
    let mut x: Vec<f64> = vec![1.0 / (n as f64).sqrt(); n];
    let mut estimate = 0.0;
    for _ in 0..500 {
        let c = FluxCoefficients { coeffs: x.iter().zip(&weights).map(|(a, w)| a * w).collect() };
        let q = basis.synthesize(&c)?;
        let kq = op.apply_linear(&q)?;
        let back = basis.analyze(&op.adjoint_apply(&kq)?)?;
        let y: Vec<f64> = back.coeffs.iter().zip(&weights).map(|(a, w)| a * w).collect();
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateEnsemble("forward operator vanishes".into()));
        }
        let next = norm.sqrt();
        x = y.into_iter().map(|v| v / norm).collect();
        if (next - estimate).abs() <= 1e-13 * next {
            return Ok(next);
        }
        estimate = next;
    }
    Ok(estimate)
}

/// Smallest point of the grid `{(1 + step)^k}` that is `≥ x`.
pub fn round_up_on_grid(x: f64) -> f64 {
    let base = (1.0 + CONSTANT_GRID_STEP).ln();
    let mut v = ((x.ln() / base).ceil() * base).exp();
    while v < x {
        v *= 1.0 + CONSTANT_GRID_STEP;
    }
    v
}

/// Smallest grid point strictly above `x`.
fn strictly_above_on_grid(x: f64) -> f64 {
    let v = round_up_on_grid(x);
    if v > x {
        v
    } else {
        v * (1.0 + CONSTANT_GRID_STEP)
    }
}

/// Smallest `C` with a non-negative margin for one sample.
fn required_c(base: &IndexFunctionSpec, terms: SampleTerms) -> Result<f64> {
    let deficit = terms.lhs - terms.norm_diff;
    let margin = |c: f64| -> Result<f64> {
        let mut spec = base.clone();
        spec.c = c;
        Ok(psi_of(&spec, terms.misfit)? - deficit)
    };
    if deficit <= 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (1e-12f64, 1.0f64);
    while margin(hi)? < 0.0 {
        lo = hi;
        hi *= 10.0;
        if hi > 1e200 {
            return Err(Error::FitFailure("no finite C validates a calibration sample".into()));
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if margin(mid)? >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    Ok(hi)
}

/// Fits `C0`, then `C` (with `M = m0` and `g0 = ‖q†‖_{D(𝒜^s)}`) so every calibration margin is non-negative.
pub fn fit_vsc_constants(
    op: &AffineForwardOperator,
    basis: &SpectralBasis,
    q_dag: &BoundaryVector,
    calibration: &[BoundaryVector],
    s: f64,
    kappa: f64,
    m0: f64,
) -> Result<IndexFunctionSpec> {
    if calibration.is_empty() {
        return Err(Error::FitFailure("empty calibration ensemble".into()));
    }
    let cprime = half_to_l2_norm(op, basis)?;
    let f_norm = basis.sobolev_norm(s, q_dag)?;
    let mut spec = IndexFunctionSpec {
        kind: IndexKind::PsiInfimum,
        c: 1.0,
        c0: strictly_above_on_grid(cprime * (kappa + 1.0).exp()),
        m: m0,
        kappa,
        s,
        cprime,
        f_norm,
        g0: f_norm.max(f64::MIN_POSITIVE),
        beta: 0.5,
        c_hat: 0.0,
        lambda_grid: default_lambda_grid(basis),
    };
    spec.validate()?;
    let mut c_max: f64 = 0.0;
    for (id, q) in calibration.iter().enumerate() {
        if !admissibility_check(q, q_dag, basis, m0)? {
            return Err(Error::InadmissibleSample(id));
        }
        let terms = sample_terms(op, q_dag, q)?;
        c_max = c_max.max(required_c(&spec, terms)?);
    }
    spec.c = round_up_on_grid(c_max.max(1e-12));
    let check = check_vsc_inequality(op, basis, q_dag, &spec, calibration)?;
    if check.min_margin < 0.0 {
        return Err(Error::FitFailure(format!(
            "fitted constants leave a calibration margin of {:e}",
            check.min_margin
        )));
    }
    Ok(spec)
}

/// Tail cut indices used by the directed part of the ensemble.
const TAIL_CUTS: [usize; 10] = [1, 2, 3, 4, 6, 8, 12, 16, 24, 32];
const JITTER: f64 = 0.02;

/// Admissible perturbations `q† + d` with `‖d‖_{1/2} ≤ m0`.
///
/// Directions are a mixture of spectral tails of `−q†`, the radial
/// direction `−q†` and isotropic random directions, each slightly
/// jittered.  The step along each direction is a random fraction in
/// `[0.8, 1]` of the one minimizing `½‖q‖² − ½‖q†‖² − ¼‖q − q†‖²`.
pub fn generate_admissible_ensemble(
    basis: &SpectralBasis,
    q_dag: &BoundaryVector,
    n: usize,
    m0: f64,
    seed: u64,
) -> Result<Vec<BoundaryVector>> {
    let c_dag = basis.analyze(q_dag)?;
    let dim = c_dag.len();
    let lambdas = basis.lambdas();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let pick: f64 = rng.random();
        let mut u: Vec<f64> = if pick < 0.5 {
            let cut = TAIL_CUTS[rng.random_range(0..TAIL_CUTS.len())].min(dim - 1);
            (0..dim)
                .map(|i| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    if i >= cut {
                        -c_dag.coeffs[i] * (1.0 + JITTER * z)
                    } else {
                        0.0
                    }
                })
                .collect()
        } else if pick < 0.65 {
            (0..dim)
                .map(|i| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    -c_dag.coeffs[i] * (1.0 + JITTER * z)
                })
                .collect()
        } else {
            (0..dim)
                .map(|i| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    z / lambdas[i]
                })
                .collect()
        };
        let uu: f64 = u.iter().map(|x| x * x).sum();
        if !(uu > 0.0) {
            continue;
        }
        let mut qu: f64 = u.iter().zip(&c_dag.coeffs).map(|(a, b)| a * b).sum();
        if qu > 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
            qu = -qu;
        }
        let optimal = -2.0 * qu / uu;
        let half: f64 = u.iter().zip(lambdas).map(|(x, l)| l * x * x).sum::<f64>().sqrt();
        let cap = m0 * (1.0 - 1e-9) / half;
        let factor: f64 = rng.random_range(0.8..=1.0);
        let r = if optimal > 0.0 {
            (optimal * factor).min(cap)
        } else {
            cap * factor
        };
        let d = FluxCoefficients { coeffs: u.iter().map(|x| r * x).collect() };
        out.push(q_dag.axpy(1.0, &basis.synthesize(&d)?));
    }
    Ok(out)
}

/// Least-squares slope and `r²` of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InsufficientData(format!("{n} points for a linear fit")));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, intercept, r2))
}
