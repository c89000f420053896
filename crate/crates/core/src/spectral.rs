//! Spectral calculus on the inner loop Γ_i.
//!
//! The curve Laplace–Beltrami operator is discretized with 1D P1 elements along
//! the loop, giving the generalized problem `S e = μ M e`. The boundary
//! operator is `𝒜 = (I + Δ_Γ)^{1/2}` with eigenvalues `λ_n = √(1 + μ_n)` and
//! `M`-orthonormal eigenvectors `e_n`. Fractional powers, Sobolev norms and the
//! truncation projectors `P_λ` are all spectral multipliers in this basis.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::BoundaryVector;
use crate::mesh::{boundary_map, BoundaryIndexMap, Mesh, Tag};

pub const MIN_LOOP_VERTICES: usize = 8;

/// Coefficients `c_n = (q, e_n)_{Γ_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxCoefficients {
    pub coeffs: Vec<f64>,
}

impl FluxCoefficients {
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn unit(n: usize, index: usize) -> Self {
        let mut coeffs = vec![0.0; n];
        coeffs[index] = 1.0;
        FluxCoefficients { coeffs }
    }
}

#[derive(Debug, Clone)]
pub struct SpectralBasis {
    map: BoundaryIndexMap,
    mass: DMatrix<f64>,
    stiffness: DMatrix<f64>,
    /// Laplace–Beltrami eigenvalues `μ_n ≥ 0`, ascending.
    mu: Vec<f64>,
    /// `λ_n = √(1 + μ_n)`, ascending, `λ_1 = 1`.
    lambda: Vec<f64>,
    /// Columns are the eigenvectors in loop order.
    vectors: DMatrix<f64>,
}

/// Eigendecomposition of the inner-loop operator.
pub fn build_spectral_basis(mesh: &Mesh) -> Result<SpectralBasis> {
    let map = boundary_map(mesh, Tag::GammaI)?;
    SpectralBasis::from_loop(map)
}

impl SpectralBasis {
    pub fn from_loop(map: BoundaryIndexMap) -> Result<Self> {
        let n = map.len();
        if n < MIN_LOOP_VERTICES {
            return Err(Error::EigenFailure(format!(
                "loop has {n} vertices, need at least {MIN_LOOP_VERTICES}"
            )));
        }
        let mass = map.mass_matrix();
        let stiffness = map.stiffness_matrix();
        let chol = mass
            .clone()
            .cholesky()
            .ok_or_else(|| Error::EigenFailure("boundary mass matrix is not SPD".into()))?;
        let l = chol.l();
        let l_inv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::EigenFailure("singular mass factor".into()))?;
        let mut reduced = &l_inv * &stiffness * l_inv.transpose();
        reduced = (&reduced + reduced.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::try_new(reduced, 1e-15, 10_000)
            .ok_or_else(|| Error::EigenFailure("symmetric eigensolver did not converge".into()))?;

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let back = l_inv.transpose();
        let mut vectors = DMatrix::zeros(n, n);
        let mut mu = Vec::with_capacity(n);
        for (col, &k) in order.iter().enumerate() {
            let mut e = &back * eig.eigenvectors.column(k);
            // Deterministic sign: the largest entry (first on ties) is positive.
            let imax = e.iamax();
            if e[imax] < 0.0 {
                e.neg_mut();
            }
            vectors.set_column(col, &e);
            mu.push(eig.eigenvalues[k].max(0.0));
        }
        if !mu.iter().all(|m| m.is_finite()) {
            return Err(Error::EigenFailure("non-finite eigenvalue".into()));
        }
        // The constant mode is exact; pin it so that λ_1 = 1 holds exactly.
        mu[0] = 0.0;
        let lambda = mu.iter().map(|m| (1.0 + m).sqrt()).collect();
        Ok(SpectralBasis {
            map,
            mass,
            stiffness,
            mu,
            lambda,
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }

    pub fn map(&self) -> &BoundaryIndexMap {
        &self.map
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambda
    }

    pub fn lambda_max(&self) -> f64 {
        *self.lambda.last().expect("non-empty basis")
    }

    pub fn laplace_beltrami_eigenvalues(&self) -> &[f64] {
        &self.mu
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn stiffness(&self) -> &DMatrix<f64> {
        &self.stiffness
    }

    /// Eigenvector `e_n` (zero-based index) as a boundary vector.
    pub fn eigenvector(&self, n: usize) -> BoundaryVector {
        BoundaryVector::from_dvector(Tag::GammaI, &self.vectors.column(n).into_owned())
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    fn check(&self, q: &BoundaryVector) -> Result<()> {
        q.check(&self.map)
    }

    pub fn analyze(&self, q: &BoundaryVector) -> Result<FluxCoefficients> {
        self.check(q)?;
        let c = self.vectors.transpose() * (&self.mass * q.as_dvector());
        Ok(FluxCoefficients {
            coeffs: c.iter().copied().collect(),
        })
    }

    pub fn synthesize(&self, c: &FluxCoefficients) -> Result<BoundaryVector> {
        if c.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: c.len(),
            });
        }
        let q = &self.vectors * DVector::from_column_slice(&c.coeffs);
        Ok(BoundaryVector::from_dvector(Tag::GammaI, &q))
    }

    fn multiply<F: Fn(f64) -> f64>(&self, q: &BoundaryVector, m: F) -> Result<BoundaryVector> {
        let mut c = self.analyze(q)?;
        for (ci, &l) in c.coeffs.iter_mut().zip(&self.lambda) {
            *ci *= m(l);
        }
        self.synthesize(&c)
    }

    /// `𝒜^s q = Σ λ_n^s c_n e_n`.
    pub fn fractional_apply(&self, s: f64, q: &BoundaryVector) -> Result<BoundaryVector> {
        self.multiply(q, |l| l.powf(s))
    }

    /// `‖q‖_{D(𝒜^s)} = (Σ λ_n^{2s} c_n²)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64, q: &BoundaryVector) -> Result<f64> {
        let c = self.analyze(q)?;
        Ok(self.sobolev_norm_coeffs(s, &c))
    }

    pub fn sobolev_norm_coeffs(&self, s: f64, c: &FluxCoefficients) -> f64 {
        c.coeffs
            .iter()
            .zip(&self.lambda)
            .map(|(ci, l)| l.powf(2.0 * s) * ci * ci)
            .sum::<f64>()
            .sqrt()
    }

    /// `(q, v)_{1/2} = Σ λ_n c_n d_n`.
    pub fn half_inner(&self, q: &BoundaryVector, v: &BoundaryVector) -> Result<f64> {
        let c = self.analyze(q)?;
        let d = self.analyze(v)?;
        Ok(c.coeffs
            .iter()
            .zip(&d.coeffs)
            .zip(&self.lambda)
            .map(|((a, b), l)| l * a * b)
            .sum())
    }

    pub fn l2_inner(&self, q: &BoundaryVector, v: &BoundaryVector) -> Result<f64> {
        self.check(q)?;
        self.check(v)?;
        Ok(q.as_dvector().dot(&(&self.mass * v.as_dvector())))
    }

    pub fn l2_norm(&self, q: &BoundaryVector) -> Result<f64> {
        Ok(self.l2_inner(q, q)?.max(0.0).sqrt())
    }

    /// `P_λ q = Σ_{λ_n ≤ λ} c_n e_n`.
    pub fn project(&self, lambda_cut: f64, q: &BoundaryVector) -> Result<BoundaryVector> {
        self.multiply(q, |l| if l <= lambda_cut { 1.0 } else { 0.0 })
    }

    /// Test flux with `c_n = σ_n λ_n^{−(s+1/2+ε)}`, random signs `σ_n`, unit `L²` norm.
    pub fn synthesize_flux_with_smoothness(&self, s: f64, eps: f64, seed: u64) -> Result<BoundaryVector> {
        if !(eps > 0.0) {
            return Err(Error::ParameterDomain(format!("eps = {eps} must be positive")));
        }
        if !(s > 0.0 && s <= 0.5) {
            return Err(Error::ParameterDomain(format!("s = {s} must lie in (0, 1/2]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exponent = -(s + 0.5 + eps);
        let mut coeffs: Vec<f64> = self
            .lambda
            .iter()
            .map(|l| {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * l.powf(exponent)
            })
            .collect();
        let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
        coeffs.iter_mut().for_each(|c| *c /= norm);
        self.synthesize(&FluxCoefficients { coeffs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_annulus_mesh, refine_uniform};
    use proptest::prelude::*;
    use rand::Rng;

    fn basis(h: f64) -> SpectralBasis {
        build_spectral_basis(&generate_annulus_mesh(0.5, 1.0, h).unwrap()).unwrap()
    }

    fn random_flux(b: &SpectralBasis, seed: u64) -> BoundaryVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        BoundaryVector::new(Tag::GammaI, (0..b.len()).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    fn max_abs_diff(a: &BoundaryVector, b: &BoundaryVector) -> f64 {
        a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    fn max_abs(a: &BoundaryVector) -> f64 {
        a.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn circle_eigenvalues_and_constant_mode() {
        let b = basis(0.02);
        assert_eq!(b.lambdas()[0], 1.0);
        let target = 5f64.sqrt();
        for n in [1, 2] {
            assert!((b.lambdas()[n] - target).abs() < 0.01 * target, "λ = {}", b.lambdas()[n]);
        }
        let e1 = b.eigenvector(0);
        let first = e1.values[0];
        assert!(e1.values.iter().all(|v| (v - first).abs() < 1e-8));
    }

    #[test]
    fn eigenvectors_are_mass_orthonormal_and_consistent() {
        let b = basis(0.05);
        let gram = b.vectors().transpose() * b.mass() * b.vectors();
        let n = b.len();
        let err = (gram - DMatrix::<f64>::identity(n, n)).amax();
        assert!(err <= 1e-10, "orthonormality residual {err}");
        for k in 0..n {
            let e = b.vectors().column(k);
            let lhs = b.stiffness() * e + b.mass() * e;
            let rhs = b.mass() * e * b.lambdas()[k].powi(2);
            let rel = (&lhs - &rhs).norm() / rhs.norm();
            assert!(rel <= 1e-8, "mode {k}: {rel}");
        }
        assert!(b.lambdas().windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn analyze_and_synthesize() {
        let b = basis(0.1);
        let c = b.analyze(&b.eigenvector(2)).unwrap();
        for (i, v) in c.coeffs.iter().enumerate() {
            let expected = if i == 2 { 1.0 } else { 0.0 };
            assert!((v - expected).abs() < 1e-10);
        }
        let q = random_flux(&b, 3);
        let back = b.synthesize(&b.analyze(&q).unwrap()).unwrap();
        assert!(max_abs_diff(&q, &back) <= 1e-10 * max_abs(&q));
        let one = BoundaryVector::constant(b.map(), 1.0);
        let c1 = b.analyze(&one).unwrap();
        assert!(c1.coeffs[0].abs() > 0.1);
        assert!(c1.coeffs[1..].iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn parseval() {
        let b = basis(0.1);
        let q = random_flux(&b, 11);
        let c = b.analyze(&q).unwrap();
        let sum: f64 = c.coeffs.iter().map(|v| v * v).sum();
        let l2 = b.l2_norm(&q).unwrap().powi(2);
        assert!((sum - l2).abs() <= 1e-10 * l2);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let b = basis(0.1);
        let bad = FluxCoefficients { coeffs: vec![1.0; b.len() + 1] };
        assert!(matches!(b.synthesize(&bad), Err(Error::DimensionMismatch { .. })));
        let wrong = BoundaryVector::new(Tag::GammaI, vec![0.0; 3]);
        assert!(b.analyze(&wrong).is_err());
    }

    #[test]
    fn fractional_powers() {
        let b = basis(0.1);
        let q = random_flux(&b, 5);
        let id = b.fractional_apply(0.0, &q).unwrap();
        assert!(max_abs_diff(&q, &id) <= 1e-12 * max_abs(&q).max(1.0));
        let e = b.eigenvector(6);
        let scaled = b.fractional_apply(0.7, &e).unwrap();
        let expected = e.scaled(b.lambdas()[6].powf(0.7));
        assert!(max_abs_diff(&scaled, &expected) <= 1e-10 * max_abs(&expected));
        let round = b.fractional_apply(-0.4, &b.fractional_apply(0.4, &q).unwrap()).unwrap();
        assert!(max_abs_diff(&q, &round) <= 1e-10 * max_abs(&q));
    }

    #[test]
    fn sobolev_norms() {
        let b = basis(0.1);
        assert!((b.sobolev_norm(0.0, &b.eigenvector(0)).unwrap() - 1.0).abs() < 1e-10);
        for n in [3, 9] {
            let v = b.sobolev_norm(0.5, &b.eigenvector(n)).unwrap();
            assert!((v - b.lambdas()[n].sqrt()).abs() < 1e-9);
        }
        let q = random_flux(&b, 8);
        assert!((b.sobolev_norm(0.0, &q).unwrap() - b.l2_norm(&q).unwrap()).abs() < 1e-10);
        let grid = [-0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0];
        let norms: Vec<f64> = grid.iter().map(|&s| b.sobolev_norm(s, &q).unwrap()).collect();
        assert!(norms.windows(2).all(|w| w[1] >= w[0]));
        let half = b.half_inner(&q, &q).unwrap();
        assert!((half.sqrt() - b.sobolev_norm(0.5, &q).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn projector_edge_cases() {
        let b = basis(0.1);
        let q = random_flux(&b, 21);
        let full = b.project(b.lambda_max(), &q).unwrap();
        assert!(max_abs_diff(&q, &full) <= 1e-10 * max_abs(&q));
        let c = b.analyze(&b.project(1.0, &q).unwrap()).unwrap();
        assert!(c.coeffs[1..].iter().all(|v| v.abs() < 1e-12));
        // ties are included
        let tie = b.lambdas()[4];
        let c = b.analyze(&b.project(tie, &b.eigenvector(4)).unwrap()).unwrap();
        assert!((c.coeffs[4] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn smooth_flux_synthesis() {
        let b = basis(0.05);
        let q1 = b.synthesize_flux_with_smoothness(0.5, 0.01, 42).unwrap();
        let q2 = b.synthesize_flux_with_smoothness(0.5, 0.01, 42).unwrap();
        assert_eq!(q1, q2);
        assert!((b.l2_norm(&q1).unwrap() - 1.0).abs() < 1e-12);
        assert!(b.sobolev_norm(0.5, &q1).unwrap().is_finite());
        let q3 = b.synthesize_flux_with_smoothness(0.5, 0.01, 43).unwrap();
        assert_ne!(q1, q3);
    }

    #[test]
    fn synthesized_smoothness_threshold_shows_under_refinement() {
        // c_n² λ_n^{2s'} ~ λ_n^{2(s'−s−ε)−1}: summable below s+ε, divergent above.
        let (s, eps) = (0.25, 0.05);
        let mut mesh = generate_annulus_mesh(0.5, 1.0, 0.1).unwrap();
        let mut below = Vec::new();
        let mut above = Vec::new();
        for _ in 0..3 {
            let b = build_spectral_basis(&mesh).unwrap();
            let q = b.synthesize_flux_with_smoothness(s, eps, 1).unwrap();
            below.push(b.sobolev_norm(s + eps - 0.2, &q).unwrap());
            above.push(b.sobolev_norm(s + eps + 0.25, &q).unwrap());
            mesh = refine_uniform(&mesh).unwrap();
        }
        for w in above.windows(2) {
            assert!(w[1] / w[0] > 1.15, "divergent branch {above:?}");
        }
        for w in below.windows(2) {
            assert!((w[1] / w[0] - 1.0).abs() < 0.05, "convergent branch {below:?}");
        }
    }

    #[test]
    fn eigenvalues_converge_at_second_order() {
        let mut mesh = generate_annulus_mesh(0.5, 1.0, 0.1).unwrap();
        let mut errors: Vec<Vec<f64>> = Vec::new();
        for _ in 0..3 {
            let b = build_spectral_basis(&mesh).unwrap();
            let err = (1..10)
                .map(|n| {
                    let mode = ((n + 1) / 2) as f64;
                    let exact = (1.0 + (mode / 0.5).powi(2)).sqrt();
                    (b.lambdas()[n] - exact).abs()
                })
                .collect();
            errors.push(err);
            mesh = refine_uniform(&mesh).unwrap();
        }
        for w in errors.windows(2) {
            for (a, b) in w[0].iter().zip(&w[1]) {
                let ratio = a / b;
                assert!((3.0..=5.0).contains(&ratio), "ratio {ratio}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn spectral_mapping(s1 in -1.0f64..1.0, s2 in -1.0f64..1.0, seed in 0u64..1000) {
            let b = basis(0.2);
            let q = random_flux(&b, seed);
            let lhs = b.fractional_apply(s1, &b.fractional_apply(s2, &q).unwrap()).unwrap();
            let rhs = b.fractional_apply(s1 + s2, &q).unwrap();
            prop_assert!(max_abs_diff(&lhs, &rhs) <= 1e-9 * max_abs(&rhs).max(1.0));
        }

        #[test]
        fn projector_decay_and_pythagoras(cut in 1.0f64..12.0, s in 0.01f64..0.5, seed in 0u64..1000) {
            let b = basis(0.2);
            let q = random_flux(&b, seed);
            let p = b.project(cut, &q).unwrap();
            let rest = q.axpy(-1.0, &p);
            let tail = b.l2_norm(&rest).unwrap();
            let bound = cut.powf(-s) * b.sobolev_norm(s, &q).unwrap();
            prop_assert!(bound - tail >= -1e-12);
            let total = b.l2_norm(&q).unwrap().powi(2);
            let split = b.l2_norm(&p).unwrap().powi(2) + tail * tail;
            prop_assert!((total - split).abs() <= 1e-10 * total);
            let pp = b.project(cut, &p).unwrap();
            prop_assert!(max_abs_diff(&p, &pp) <= 1e-10 * max_abs(&q));
            let v = random_flux(&b, seed + 1);
            let a1 = b.l2_inner(&p, &v).unwrap();
            let a2 = b.l2_inner(&q, &b.project(cut, &v).unwrap()).unwrap();
            prop_assert!((a1 - a2).abs() <= 1e-10 * (1.0 + a1.abs()));
        }
    }
}
