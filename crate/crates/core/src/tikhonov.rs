//! Affine forward operator `A(q) = K q + b`, noise model, Tikhonov solver and
//! the discrepancy principle.
//!
//! The Tikhonov functional is
//!
//! ```text
//!   J_ρ(q) = (1/ρ) ‖A(q) − u^δ‖²_{Γ_a} + ½ ‖q‖²_{Γ_i}
//! ```
//!
//! whose minimizer solves `(Kᵀ M_a K + (ρ/2) M_i) q = Kᵀ M_a (u^δ − b)`.
//! With the Cholesky factors `M = L Lᵀ` the whitened operator
//! `B = L_aᵀ K L_i^{−T}` is diagonalized once by an SVD, after which every
//! solve and every residual evaluation is a spectral filter.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fem::{boundary_l2_norm, BoundaryVector, ForwardModel, ProblemData};
use crate::mesh::{BoundaryIndexMap, Mesh, Tag};
use crate::sparse::pcg;
use crate::spectral::SpectralBasis;

/// Inner-loop size above which `K` is applied matrix-free.
pub const DENSE_OPERATOR_LIMIT: usize = 512;
pub const RHO_MIN: f64 = 1e-14;
pub const RHO_MAX: f64 = 1e6;
pub const DEFAULT_TAU: f64 = 1.5;
const NORMAL_RESIDUAL_TOLERANCE: f64 = 1e-10;
const ADMISSIBILITY_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Dense,
    MatrixFree,
}

#[derive(Debug, Clone)]
struct WhitenedSvd {
    /// Lower Cholesky factor of `M_i`.
    l_i: DMatrix<f64>,
    u: DMatrix<f64>,
    sigma: DVector<f64>,
    v_t: DMatrix<f64>,
}

/// Discrete `A(q) = K q + b` between the inner and outer boundary loops.
#[derive(Debug, Clone)]
pub struct AffineForwardOperator {
    model: Arc<ForwardModel>,
    offset: DVector<f64>,
    k: Option<DMatrix<f64>>,
    mass_a: DMatrix<f64>,
    mass_i: DMatrix<f64>,
    /// Lower Cholesky factor of `M_a`.
    l_a: DMatrix<f64>,
    svd: Option<WhitenedSvd>,
}

pub fn build_forward_operator(mesh: &Mesh, data: ProblemData) -> Result<AffineForwardOperator> {
    let model = ForwardModel::new(Arc::new(mesh.clone()), data)?;
    AffineForwardOperator::new(Arc::new(model))
}

impl AffineForwardOperator {
    /// Dense when the inner loop has at most [`DENSE_OPERATOR_LIMIT`] vertices.
    pub fn new(model: Arc<ForwardModel>) -> Result<Self> {
        let repr = if model.inner().len() <= DENSE_OPERATOR_LIMIT {
            Representation::Dense
        } else {
            Representation::MatrixFree
        };
        Self::with_representation(model, repr)
    }

    pub fn with_representation(model: Arc<ForwardModel>, repr: Representation) -> Result<Self> {
        let n_i = model.inner().len();
        let n_a = model.outer().len();
        let u0 = model.solve(&BoundaryVector::zeros(model.inner()))?;
        let offset = model.trace(&u0, Tag::GammaA)?.as_dvector();
        let mass_a = model.outer().mass_matrix();
        let mass_i = model.inner().mass_matrix();
        let l_a = cholesky_lower(&mass_a)?;

        let (k, svd) = match repr {
            Representation::Dense => {
                let mut k = DMatrix::zeros(n_a, n_i);
                let mut hat = BoundaryVector::zeros(model.inner());
                for j in 0..n_i {
                    hat.values[j] = 1.0;
                    let u = model.solve_flux_only(&hat)?;
                    let col = model.trace(&u, Tag::GammaA)?;
                    k.set_column(j, &col.as_dvector());
                    hat.values[j] = 0.0;
                }
                let l_i = cholesky_lower(&mass_i)?;
                let whitened = l_a.transpose() * &k;
                // B = L_aᵀ K L_i^{−T}, i.e. Bᵀ = L_i^{−1} (L_aᵀ K)ᵀ
                let bt = l_i
                    .solve_lower_triangular(&whitened.transpose())
                    .ok_or_else(|| Error::SolverFailure("singular inner mass factor".into()))?;
                let b = bt.transpose();
                let svd = b.svd(true, true);
                let u = svd.u.ok_or_else(|| Error::SolverFailure("SVD without U".into()))?;
                let v_t = svd.v_t.ok_or_else(|| Error::SolverFailure("SVD without Vᵀ".into()))?;
                (
                    Some(k),
                    Some(WhitenedSvd {
                        l_i,
                        u,
                        sigma: svd.singular_values,
                        v_t,
                    }),
                )
            }
            Representation::MatrixFree => (None, None),
        };
        Ok(AffineForwardOperator {
            model,
            offset,
            k,
            mass_a,
            mass_i,
            l_a,
            svd,
        })
    }

    pub fn representation(&self) -> Representation {
        if self.k.is_some() {
            Representation::Dense
        } else {
            Representation::MatrixFree
        }
    }

    pub fn model(&self) -> &Arc<ForwardModel> {
        &self.model
    }

    pub fn inner(&self) -> &BoundaryIndexMap {
        self.model.inner()
    }

    pub fn outer(&self) -> &BoundaryIndexMap {
        self.model.outer()
    }

    pub fn n_inner(&self) -> usize {
        self.model.inner().len()
    }

    pub fn n_outer(&self) -> usize {
        self.model.outer().len()
    }

    /// `b = A(0)`.
    pub fn offset(&self) -> BoundaryVector {
        BoundaryVector::from_dvector(Tag::GammaA, &self.offset)
    }

    pub fn matrix(&self) -> Option<&DMatrix<f64>> {
        self.k.as_ref()
    }

    pub fn mass_a(&self) -> &DMatrix<f64> {
        &self.mass_a
    }

    pub fn mass_i(&self) -> &DMatrix<f64> {
        &self.mass_i
    }

    /// Singular values of the whitened operator `M_a^{1/2} K M_i^{−1/2}`, descending.
    pub fn singular_values(&self) -> Option<Vec<f64>> {
        self.svd.as_ref().map(|s| {
            let mut v: Vec<f64> = s.sigma.iter().copied().collect();
            v.sort_by(|a, b| b.total_cmp(a));
            v
        })
    }

    fn check_inner(&self, q: &BoundaryVector) -> Result<()> {
        q.check(self.model.inner())
    }

    fn check_outer(&self, w: &BoundaryVector) -> Result<()> {
        w.check(self.model.outer())
    }

    /// `K q`.
    pub fn apply_linear(&self, q: &BoundaryVector) -> Result<BoundaryVector> {
        self.check_inner(q)?;
        match &self.k {
            Some(k) => Ok(BoundaryVector::from_dvector(Tag::GammaA, &(k * q.as_dvector()))),
            None => {
                let u = self.model.solve_flux_only(q)?;
                self.model.trace(&u, Tag::GammaA)
            }
        }
    }

    /// `A(q) = K q + b`.
    pub fn apply(&self, q: &BoundaryVector) -> Result<BoundaryVector> {
        let kq = self.apply_linear(q)?;
        Ok(BoundaryVector::from_dvector(Tag::GammaA, &(kq.as_dvector() + &self.offset)))
    }

    /// Euclidean transpose `Kᵀ y`.
    fn transpose_apply(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.k {
            Some(k) => Ok(k.transpose() * y),
            None => {
                // K = P_a A⁻¹ (−P_iᵀ M_i) with A symmetric, so Kᵀ = −M_i P_i A⁻¹ P_aᵀ.
                let u = self.model.solve_outer_load(y.as_slice())?;
                let restricted = DVector::from_iterator(
                    self.n_inner(),
                    self.model.inner().vertices.iter().map(|&v| u[v]),
                );
                Ok(-(&self.mass_i * restricted))
            }
        }
    }

    /// Adjoint in the boundary `L²` inner products: `K* w = M_i⁻¹ Kᵀ M_a w`.
    pub fn adjoint_apply(&self, w: &BoundaryVector) -> Result<BoundaryVector> {
        self.check_outer(w)?;
        let y = self.transpose_apply(&(&self.mass_a * w.as_dvector()))?;
        let x = self
            .mass_i
            .clone()
            .cholesky()
            .ok_or_else(|| Error::SolverFailure("inner mass matrix is not SPD".into()))?
            .solve(&y);
        Ok(BoundaryVector::from_dvector(Tag::GammaI, &x))
    }

    pub fn inner_l2(&self, a: &BoundaryVector, b: &BoundaryVector) -> f64 {
        a.as_dvector().dot(&(&self.mass_i * b.as_dvector()))
    }

    pub fn outer_l2(&self, a: &BoundaryVector, b: &BoundaryVector) -> f64 {
        a.as_dvector().dot(&(&self.mass_a * b.as_dvector()))
    }

    pub fn inner_norm(&self, q: &BoundaryVector) -> f64 {
        self.inner_l2(q, q).max(0.0).sqrt()
    }

    pub fn outer_norm(&self, w: &BoundaryVector) -> f64 {
        self.outer_l2(w, w).max(0.0).sqrt()
    }

    /// `J_ρ(q)`.
    pub fn objective(&self, u_delta: &BoundaryVector, rho: f64, q: &BoundaryVector) -> Result<f64> {
        let r = self.apply(q)?.axpy(-1.0, u_delta);
        Ok(self.outer_norm(&r).powi(2) / rho + 0.5 * self.inner_norm(q).powi(2))
    }

    fn whitened_data(&self, u_delta: &BoundaryVector) -> Result<DVector<f64>> {
        self.check_outer(u_delta)?;
        Ok(self.l_a.transpose() * (u_delta.as_dvector() - &self.offset))
    }

    /// Relative backward error of `q` in the normal equations.
    pub fn normal_equation_residual(&self, u_delta: &BoundaryVector, rho: f64, q: &BoundaryVector) -> Result<f64> {
        let kq = self.apply_linear(q)?.as_dvector();
        let lhs = self.transpose_apply(&(&self.mass_a * kq))? + &self.mass_i * q.as_dvector() * (0.5 * rho);
        let rhs = self.transpose_apply(&(&self.mass_a * (u_delta.as_dvector() - &self.offset)))?;
        let scale = self.normal_matrix_norm(rho) * q.as_dvector().norm() + rhs.norm();
        let r = (lhs - &rhs).norm();
        Ok(if scale > 0.0 { r / scale } else { r })
    }

    fn normal_matrix_norm(&self, rho: f64) -> f64 {
        let mi = self.mass_i.norm();
        match &self.svd {
            Some(svd) => {
                let smax = svd.sigma.max();
                let li = svd.l_i.norm();
                smax * smax * li * li + 0.5 * rho * mi
            }
            None => {
                let k = self.k.as_ref().map(|k| k.norm()).unwrap_or(1.0);
                k * k * self.mass_a.norm() + 0.5 * rho * mi
            }
        }
    }

    /// Residual `‖A(q_ρ) − u^δ‖_{Γ_a}` of the Tikhonov minimizer, without forming `q_ρ`.
    pub fn residual_at(&self, u_delta: &BoundaryVector, rho: f64) -> Result<f64> {
        if !(rho > 0.0) {
            return Err(Error::NonPositiveRho(rho));
        }
        match &self.svd {
            Some(svd) => {
                let d = self.whitened_data(u_delta)?;
                let coeffs = svd.u.transpose() * &d;
                let perp = (&d - &svd.u * &coeffs).norm_squared();
                let half = 0.5 * rho;
                let filtered: f64 = coeffs
                    .iter()
                    .zip(svd.sigma.iter())
                    .map(|(c, s)| (half / (s * s + half) * c).powi(2))
                    .sum();
                Ok((filtered + perp).sqrt())
            }
            None => {
                let result = self.tikhonov_solve(u_delta, rho)?;
                Ok(result.residual_norm)
            }
        }
    }

    /// Minimizer of `J_ρ`.
    pub fn tikhonov_solve(&self, u_delta: &BoundaryVector, rho: f64) -> Result<TikhonovResult> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::NonPositiveRho(rho));
        }
        self.check_outer(u_delta)?;
        let (q, iterations) = match &self.svd {
            Some(svd) => {
                let d = self.whitened_data(u_delta)?;
                let coeffs = svd.u.transpose() * &d;
                let half = 0.5 * rho;
                let filtered = DVector::from_iterator(
                    coeffs.len(),
                    coeffs.iter().zip(svd.sigma.iter()).map(|(c, s)| s / (s * s + half) * c),
                );
                let p = svd.v_t.transpose() * filtered;
                let q = svd
                    .l_i
                    .transpose()
                    .solve_upper_triangular(&p)
                    .ok_or_else(|| Error::SolverFailure("singular inner mass factor".into()))?;
                (q, 0)
            }
            None => self.solve_normal_cg(u_delta, rho)?,
        };
        let q_rec = BoundaryVector::from_dvector(Tag::GammaI, &q);
        let residual = self.apply(&q_rec)?.axpy(-1.0, u_delta);
        let normal_residual = self.normal_equation_residual(u_delta, rho, &q_rec)?;
        if !(normal_residual <= NORMAL_RESIDUAL_TOLERANCE) {
            return Err(Error::SolverFailure(format!(
                "normal equations solved only to {normal_residual:e}"
            )));
        }
        let residual_norm = match self.svd {
            Some(_) => self.residual_at(u_delta, rho)?,
            None => self.outer_norm(&residual),
        };
        Ok(TikhonovResult {
            solution_norm: self.inner_norm(&q_rec),
            q_rec,
            rho,
            residual_norm,
            normal_residual,
            admissible: None,
            iterations,
        })
    }

    fn solve_normal_cg(&self, u_delta: &BoundaryVector, rho: f64) -> Result<(DVector<f64>, usize)> {
        let rhs = self.transpose_apply(&(&self.mass_a * (u_delta.as_dvector() - &self.offset)))?;
        let n = self.n_inner();
        let failure: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
        let apply = |x: &[f64]| -> Vec<f64> {
            let q = BoundaryVector::new(Tag::GammaI, x.to_vec());
            let out = self
                .apply_linear(&q)
                .and_then(|kq| self.transpose_apply(&(&self.mass_a * kq.as_dvector())));
            match out {
                Ok(v) => (v + &self.mass_i * DVector::from_column_slice(x) * (0.5 * rho))
                    .iter()
                    .copied()
                    .collect(),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    vec![0.0; n]
                }
            }
        };
        let diag: Vec<f64> = (0..n).map(|i| 0.5 * rho * self.mass_i[(i, i)]).collect();
        let mut x = vec![0.0; n];
        let outcome = pcg(apply, &diag, rhs.as_slice(), &mut x, 1e-12, 20 * n.max(50));
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        let outcome = outcome?;
        Ok((DVector::from_vec(x), outcome.iterations))
    }

    /// Rho on the bracket `[RHO_MIN, RHO_MAX]` whose residual falls in `[δ, τδ]`.
    pub fn choose_rho_discrepancy(&self, u_delta: &BoundaryVector, delta: f64, tau: f64) -> Result<DiscrepancyChoice> {
        if !(delta > 0.0) {
            return Err(Error::ParameterDomain(format!("delta = {delta} must be positive")));
        }
        if !(tau > 1.0) {
            return Err(Error::ParameterDomain(format!("tau_d = {tau} must exceed 1")));
        }
        let upper = tau * delta;
        let mut lo = RHO_MIN.ln();
        let mut hi = RHO_MAX.ln();
        let mut res_lo = self.residual_at(u_delta, RHO_MIN)?;
        let mut res_hi = self.residual_at(u_delta, RHO_MAX)?;
        if res_lo > upper {
            return Err(Error::BracketFailure(format!(
                "residual {res_lo:e} at rho = {RHO_MIN:e} already exceeds tau·delta = {upper:e}"
            )));
        }
        if res_hi < delta {
            return Err(Error::BracketFailure(format!(
                "residual {res_hi:e} at rho = {RHO_MAX:e} stays below delta = {delta:e}"
            )));
        }
        if res_lo >= delta {
            return Ok(DiscrepancyChoice { rho: RHO_MIN, residual: res_lo, steps: 0 });
        }
        if res_hi <= upper {
            return Ok(DiscrepancyChoice { rho: RHO_MAX, residual: res_hi, steps: 0 });
        }
        for step in 1..=200 {
            let mid = 0.5 * (lo + hi);
            let rho = mid.exp();
            let res = self.residual_at(u_delta, rho)?;
            let slack = 1e-12 * res_hi.max(1e-300);
            if res < res_lo - slack || res > res_hi + slack {
                return Err(Error::SolverFailure(format!(
                    "residual is not monotone in rho near {rho:e}"
                )));
            }
            if res < delta {
                lo = mid;
                res_lo = res;
            } else if res > upper {
                hi = mid;
                res_hi = res;
            } else {
                return Ok(DiscrepancyChoice { rho, residual: res, steps: step });
            }
        }
        Err(Error::BracketFailure("bisection did not reach the residual window".into()))
    }
}

fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::SolverFailure("boundary mass matrix is not SPD".into()))?
        .l())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TikhonovResult {
    pub q_rec: BoundaryVector,
    pub rho: f64,
    /// `‖A(q_rec) − u^δ‖_{L²(Γ_a)}`
    pub residual_norm: f64,
    /// `‖q_rec‖_{L²(Γ_i)}`
    pub solution_norm: f64,
    /// Relative backward error in the normal equations.
    pub normal_residual: f64,
    /// `‖q_rec − q†‖_{1/2} ≤ M0`, when the true flux is known.
    pub admissible: Option<bool>,
    /// CG iterations; 0 for the dense spectral solve.
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscrepancyChoice {
    pub rho: f64,
    pub residual: f64,
    pub steps: usize,
}

/// `u^δ = u† + δ ξ/‖ξ‖` with `ξ` i.i.d. standard normal per Γ_a vertex.
pub fn add_noise(outer: &BoundaryIndexMap, u_exact: &BoundaryVector, delta: f64, seed: u64) -> Result<BoundaryVector> {
    u_exact.check(outer)?;
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::ParameterDomain(format!("delta = {delta} must be non-negative")));
    }
    if delta == 0.0 {
        return Ok(u_exact.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..2 {
        let xi = BoundaryVector::new(
            Tag::GammaA,
            (0..outer.len()).map(|_| StandardNormal.sample(&mut rng)).collect(),
        );
        let norm = boundary_l2_norm(outer, &xi)?;
        if norm > 0.0 && norm.is_finite() {
            return Ok(u_exact.axpy(delta / norm, &xi));
        }
    }
    Err(Error::DegenerateNoise)
}

/// `‖q_rec − q†‖_{1/2,Γ_i} ≤ M0`, the closed admissible ball.
pub fn admissibility_check(q_rec: &BoundaryVector, q_dag: &BoundaryVector, basis: &SpectralBasis, m0: f64) -> Result<bool> {
    let d = q_rec.axpy(-1.0, q_dag);
    let dist = basis.sobolev_norm(0.5, &d)?;
    Ok(dist <= m0 * (1.0 + ADMISSIBILITY_RTOL))
}
