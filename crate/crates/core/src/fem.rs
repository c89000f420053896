//! P1 finite elements for
//!
//! ```text
//!   −∇·(α∇u) = f        in Ω
//!   −α ∂u/∂n = k (u − u_a)  on Γ_a
//!   −α ∂u/∂n = q            on Γ_i
//! ```
//!
//! in the weak form `∫ α∇u·∇v + ∫_{Γ_a} k u v = ∫ f v − ∫_{Γ_i} q v + ∫_{Γ_a} k u_a v`.
//! All integrands are piecewise polynomial and integrated exactly.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::mesh::{boundary_map, BoundaryIndexMap, Mesh, Tag};
use crate::sparse::{norm2, pcg, CsrMatrix, EnvelopeCholesky};

/// Above this many unknowns the forward solve switches from Cholesky to PCG.
pub const DIRECT_SOLVER_LIMIT: usize = 200_000;
const CG_TOLERANCE: f64 = 1e-12;
const RESIDUAL_TOLERANCE: f64 = 1e-10;
const MIN_TRIANGLE_AREA: f64 = 1e-14;

/// Nodal values of a P1 function.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(mesh: &Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.n_vertices() {
            return Err(Error::DimensionMismatch {
                expected: mesh.n_vertices(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("scalar field has non-finite values".into()));
        }
        Ok(ScalarField { values })
    }

    pub(crate) fn from_values_unchecked(values: Vec<f64>) -> Self {
        ScalarField { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Values on one boundary loop, in [`BoundaryIndexMap`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryVector {
    pub tag: Tag,
    pub values: Vec<f64>,
}

impl BoundaryVector {
    pub fn new(tag: Tag, values: Vec<f64>) -> Self {
        BoundaryVector { tag, values }
    }

    pub fn constant(map: &BoundaryIndexMap, c: f64) -> Self {
        BoundaryVector::new(map.tag, vec![c; map.len()])
    }

    pub fn zeros(map: &BoundaryIndexMap) -> Self {
        BoundaryVector::constant(map, 0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check(&self, map: &BoundaryIndexMap) -> Result<()> {
        if self.tag != map.tag {
            return Err(Error::TagMismatch {
                expected: map.tag,
                found: self.tag,
            });
        }
        if self.values.len() != map.len() {
            return Err(Error::DimensionMismatch {
                expected: map.len(),
                found: self.values.len(),
            });
        }
        Ok(())
    }

    pub fn as_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    pub fn from_dvector(tag: Tag, v: &DVector<f64>) -> Self {
        BoundaryVector::new(tag, v.iter().copied().collect())
    }

    pub fn scaled(&self, c: f64) -> Self {
        BoundaryVector::new(self.tag, self.values.iter().map(|v| c * v).collect())
    }

    /// `self + c·other`; panics on a tag or length mismatch.
    pub fn axpy(&self, c: f64, other: &BoundaryVector) -> Self {
        assert_eq!(self.tag, other.tag);
        assert_eq!(self.len(), other.len());
        BoundaryVector::new(
            self.tag,
            self.values.iter().zip(&other.values).map(|(a, b)| a + c * b).collect(),
        )
    }
}

/// Coefficients of the elliptic system.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemData {
    /// Diffusivity at every vertex.
    pub alpha: Vec<f64>,
    /// Robin coefficient on Γ_a.
    pub k: BoundaryVector,
    /// Volume source at every vertex.
    pub f: Vec<f64>,
    /// Ambient data on Γ_a.
    pub u_a: BoundaryVector,
}

impl ProblemData {
    pub fn constant(mesh: &Mesh, alpha: f64, k: f64, f: f64, u_a: f64) -> Result<Self> {
        let outer = boundary_map(mesh, Tag::GammaA)?;
        let data = ProblemData {
            alpha: vec![alpha; mesh.n_vertices()],
            k: BoundaryVector::constant(&outer, k),
            f: vec![f; mesh.n_vertices()],
            u_a: BoundaryVector::constant(&outer, u_a),
        };
        data.validate(mesh)?;
        Ok(data)
    }

    /// Same coefficients with `f ≡ 0` and `u_a ≡ 0`.
    pub fn homogeneous(&self) -> Self {
        ProblemData {
            alpha: self.alpha.clone(),
            k: self.k.clone(),
            f: vec![0.0; self.f.len()],
            u_a: BoundaryVector::new(self.u_a.tag, vec![0.0; self.u_a.len()]),
        }
    }

    pub fn validate(&self, mesh: &Mesh) -> Result<()> {
        let outer = boundary_map(mesh, Tag::GammaA)?;
        for (name, v) in [("alpha", &self.alpha), ("f", &self.f)] {
            if v.len() != mesh.n_vertices() {
                return Err(Error::InvalidData(format!(
                    "{name} has {} values for {} vertices",
                    v.len(),
                    mesh.n_vertices()
                )));
            }
        }
        self.k.check(&outer)?;
        self.u_a.check(&outer)?;
        let all = self.alpha.iter().chain(&self.f).chain(&self.k.values).chain(&self.u_a.values);
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite coefficient".into()));
        }
        let alpha_min = self.alpha.iter().copied().fold(f64::INFINITY, f64::min);
        if !(alpha_min > 0.0) {
            return Err(Error::InvalidData(format!("min alpha = {alpha_min} must be positive")));
        }
        let k_min = self.k.values.iter().copied().fold(f64::INFINITY, f64::min);
        if !(k_min > 0.0) {
            return Err(Error::InvalidData(format!("min k = {k_min} must be positive")));
        }
        Ok(())
    }
}

/// Gradients of the three barycentric coordinates and the area.
fn element_gradients(p: [[f64; 2]; 3]) -> ([[f64; 2]; 3], f64) {
    let area = crate::mesh::signed_area(p[0], p[1], p[2]);
    let mut g = [[0.0; 2]; 3];
    for i in 0..3 {
        let j = (i + 1) % 3;
        let k = (i + 2) % 3;
        g[i] = [(p[j][1] - p[k][1]) / (2.0 * area), (p[k][0] - p[j][0]) / (2.0 * area)];
    }
    (g, area)
}

fn element_points(mesh: &Mesh, tri: [usize; 3]) -> [[f64; 2]; 3] {
    let v = mesh.vertices();
    [v[tri[0]], v[tri[1]], v[tri[2]]]
}

/// Stiffness plus Robin mass: `∫ α∇u·∇v + ∫_{Γ_a} k u v`.
pub fn assemble_system(mesh: &Mesh, data: &ProblemData) -> Result<CsrMatrix> {
    data.validate(mesh)?;
    let outer = boundary_map(mesh, Tag::GammaA)?;
    let mut triplets = Vec::with_capacity(9 * mesh.n_triangles() + 4 * outer.len());
    for (t, &tri) in mesh.triangles().iter().enumerate() {
        let (grads, area) = element_gradients(element_points(mesh, tri));
        if area < MIN_TRIANGLE_AREA {
            return Err(Error::DegenerateTriangle { index: t, area });
        }
        let alpha = (data.alpha[tri[0]] + data.alpha[tri[1]] + data.alpha[tri[2]]) / 3.0;
        for i in 0..3 {
            for j in 0..3 {
                let g = grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1];
                triplets.push((tri[i], tri[j], alpha * area * g));
            }
        }
    }
    let n = outer.len();
    for i in 0..n {
        let j = (i + 1) % n;
        let len = outer.edge_lengths[i];
        let (ka, kb) = (data.k.values[i], data.k.values[j]);
        let (va, vb) = (outer.vertices[i], outer.vertices[j]);
        // ∫ k φ_a φ_b with k linear along the edge.
        triplets.push((va, va, len * (ka / 4.0 + kb / 12.0)));
        triplets.push((vb, vb, len * (ka / 12.0 + kb / 4.0)));
        let off = len * (ka + kb) / 12.0;
        triplets.push((va, vb, off));
        triplets.push((vb, va, off));
    }
    Ok(CsrMatrix::from_triplets(mesh.n_vertices(), triplets))
}

/// `∫ f v` with nodal `f`.
pub fn source_load(mesh: &Mesh, f: &[f64]) -> Vec<f64> {
    let mut b = vec![0.0; mesh.n_vertices()];
    for &tri in mesh.triangles() {
        let area = crate::mesh::signed_area(
            mesh.vertices()[tri[0]],
            mesh.vertices()[tri[1]],
            mesh.vertices()[tri[2]],
        );
        let sum: f64 = tri.iter().map(|&v| f[v]).sum();
        for &v in &tri {
            b[v] += area / 12.0 * (f[v] + sum);
        }
    }
    b
}

/// `∫_{Γ_a} k u_a v` with both factors linear along each edge.
pub fn ambient_load(mesh: &Mesh, outer: &BoundaryIndexMap, k: &BoundaryVector, u_a: &BoundaryVector) -> Vec<f64> {
    let mut b = vec![0.0; mesh.n_vertices()];
    let n = outer.len();
    for i in 0..n {
        let j = (i + 1) % n;
        let len = outer.edge_lengths[i];
        let (ka, kb) = (k.values[i], k.values[j]);
        let (ua, ub) = (u_a.values[i], u_a.values[j]);
        // Exact cubic moments: ∫(1−t)³ = ∫t³ = 1/4, ∫(1−t)²t = ∫(1−t)t² = 1/12.
        b[outer.vertices[i]] += len * (ka * ua / 4.0 + (ka * ub + kb * ua) / 12.0 + kb * ub / 12.0);
        b[outer.vertices[j]] += len * (ka * ua / 12.0 + (ka * ub + kb * ua) / 12.0 + kb * ub / 4.0);
    }
    b
}

/// `−∫_{Γ_i} q v` with `q` linear along each edge.
pub fn flux_load(mesh: &Mesh, inner: &BoundaryIndexMap, q: &BoundaryVector) -> Result<Vec<f64>> {
    q.check(inner)?;
    let mut b = vec![0.0; mesh.n_vertices()];
    let n = inner.len();
    for i in 0..n {
        let j = (i + 1) % n;
        let len = inner.edge_lengths[i];
        let (qa, qb) = (q.values[i], q.values[j]);
        b[inner.vertices[i]] -= len * (2.0 * qa + qb) / 6.0;
        b[inner.vertices[j]] -= len * (qa + 2.0 * qb) / 6.0;
    }
    Ok(b)
}

/// Full load vector `∫ f v − ∫_{Γ_i} q v + ∫_{Γ_a} k u_a v`.
pub fn assemble_rhs(mesh: &Mesh, data: &ProblemData, q: &BoundaryVector) -> Result<Vec<f64>> {
    let inner = boundary_map(mesh, Tag::GammaI)?;
    let outer = boundary_map(mesh, Tag::GammaA)?;
    let mut b = flux_load(mesh, &inner, q)?;
    for (bi, s) in b.iter_mut().zip(source_load(mesh, &data.f)) {
        *bi += s;
    }
    for (bi, s) in b.iter_mut().zip(ambient_load(mesh, &outer, &data.k, &data.u_a)) {
        *bi += s;
    }
    Ok(b)
}

#[derive(Debug, Clone)]
enum Factorization {
    Cholesky(EnvelopeCholesky),
    Cg { diag: Vec<f64> },
}

/// Assembled SPD system with a reusable solver.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    matrix: CsrMatrix,
    factor: Factorization,
}

impl LinearSystem {
    /// Cholesky up to [`DIRECT_SOLVER_LIMIT`] unknowns, PCG beyond.
    pub fn new(matrix: CsrMatrix) -> Result<Self> {
        let direct = matrix.n() <= DIRECT_SOLVER_LIMIT;
        Self::with_solver(matrix, direct)
    }

    pub fn with_solver(matrix: CsrMatrix, direct: bool) -> Result<Self> {
        let factor = if direct {
            Factorization::Cholesky(EnvelopeCholesky::factor(&matrix)?)
        } else {
            Factorization::Cg {
                diag: matrix.diagonal(),
            }
        };
        Ok(LinearSystem { matrix, factor })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.factor, Factorization::Cholesky(_))
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.matrix.n() {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.n(),
                found: rhs.len(),
            });
        }
        let x = match &self.factor {
            Factorization::Cholesky(chol) => chol.solve(rhs),
            Factorization::Cg { diag } => {
                let mut x = vec![0.0; rhs.len()];
                pcg(|v| self.matrix.mul_vec(v), diag, rhs, &mut x, CG_TOLERANCE, 20 * rhs.len())?;
                x
            }
        };
        let rel = self.relative_residual(&x, rhs);
        if !(rel <= RESIDUAL_TOLERANCE) {
            return Err(Error::SolverFailure(format!(
                "relative residual {rel:e} exceeds {RESIDUAL_TOLERANCE:e}"
            )));
        }
        Ok(x)
    }

    pub fn relative_residual(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let ax = self.matrix.mul_vec(x);
        let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let b = norm2(rhs);
        if b == 0.0 {
            norm2(&r)
        } else {
            norm2(&r) / b
        }
    }
}

/// Solves the assembled system; the residual is checked against `1e-10` relative.
pub fn solve_forward(mesh: &Mesh, system: &LinearSystem, rhs: &[f64]) -> Result<ScalarField> {
    let x = system.solve(rhs)?;
    ScalarField::new(mesh, x)
}

/// Restriction of nodal values to a boundary loop.
pub fn trace(map: &BoundaryIndexMap, u: &ScalarField) -> BoundaryVector {
    BoundaryVector::new(map.tag, map.vertices.iter().map(|&v| u.values[v]).collect())
}

/// `(‖u‖_{L²(Ω)}, ‖u‖_{H¹(Ω)})` from the exact P1 mass and stiffness forms.
pub fn norms(mesh: &Mesh, u: &ScalarField) -> (f64, f64) {
    let mut l2 = 0.0;
    let mut semi = 0.0;
    for &tri in mesh.triangles() {
        let (grads, area) = element_gradients(element_points(mesh, tri));
        let vals = [u.values[tri[0]], u.values[tri[1]], u.values[tri[2]]];
        let sum: f64 = vals.iter().sum();
        let sq: f64 = vals.iter().map(|v| v * v).sum();
        l2 += area / 12.0 * (sq + sum * sum);
        let mut g = [0.0; 2];
        for i in 0..3 {
            g[0] += vals[i] * grads[i][0];
            g[1] += vals[i] * grads[i][1];
        }
        semi += area * (g[0] * g[0] + g[1] * g[1]);
    }
    (l2.max(0.0).sqrt(), (l2 + semi).max(0.0).sqrt())
}

/// `L²` norm of a P1 boundary function (consistent edge mass).
pub fn boundary_l2_norm(map: &BoundaryIndexMap, v: &BoundaryVector) -> Result<f64> {
    v.check(map)?;
    Ok(boundary_inner(map, &v.values, &v.values).max(0.0).sqrt())
}

/// Exact `L²` inner product of two P1 functions on a loop.
pub fn boundary_inner(map: &BoundaryIndexMap, a: &[f64], b: &[f64]) -> f64 {
    let n = map.len();
    let mut s = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        let len = map.edge_lengths[i];
        s += len / 6.0 * (2.0 * a[i] * b[i] + a[i] * b[j] + a[j] * b[i] + 2.0 * a[j] * b[j]);
    }
    s
}

/// Errors `(‖u − u*‖_{L²}, ‖u − u*‖_{H¹})` against an exact solution, by a
/// degree-5 quadrature on each triangle.
pub fn error_norms<F, G>(mesh: &Mesh, u: &ScalarField, exact: F, exact_grad: G) -> (f64, f64)
where
    F: Fn([f64; 2]) -> f64,
    G: Fn([f64; 2]) -> [f64; 2],
{
    // Dunavant 7-point rule: (barycentric coordinates, weight).
    let a1 = 0.059_715_871_789_770;
    let b1 = 0.470_142_064_105_115;
    let a2 = 0.797_426_985_353_087;
    let b2 = 0.101_286_507_323_456;
    let w0 = 0.225;
    let w1 = 0.132_394_152_788_506;
    let w2 = 0.125_939_180_544_827;
    let rule: [([f64; 3], f64); 7] = [
        ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], w0),
        ([a1, b1, b1], w1),
        ([b1, a1, b1], w1),
        ([b1, b1, a1], w1),
        ([a2, b2, b2], w2),
        ([b2, a2, b2], w2),
        ([b2, b2, a2], w2),
    ];
    let mut l2 = 0.0;
    let mut semi = 0.0;
    for &tri in mesh.triangles() {
        let p = element_points(mesh, tri);
        let (grads, area) = element_gradients(p);
        let vals = [u.values[tri[0]], u.values[tri[1]], u.values[tri[2]]];
        let mut gh = [0.0; 2];
        for i in 0..3 {
            gh[0] += vals[i] * grads[i][0];
            gh[1] += vals[i] * grads[i][1];
        }
        for (bary, w) in rule {
            let x = [
                bary[0] * p[0][0] + bary[1] * p[1][0] + bary[2] * p[2][0],
                bary[0] * p[0][1] + bary[1] * p[1][1] + bary[2] * p[2][1],
            ];
            let uh = bary[0] * vals[0] + bary[1] * vals[1] + bary[2] * vals[2];
            let e = uh - exact(x);
            let ge = exact_grad(x);
            l2 += w * area * e * e;
            semi += w * area * ((gh[0] - ge[0]).powi(2) + (gh[1] - ge[1]).powi(2));
        }
    }
    (l2.sqrt(), (l2 + semi).sqrt())
}

/// Forward model on one mesh: factorized system plus boundary bookkeeping.
///
/// Immutable once built; `solve*` calls only read shared state.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    mesh: Arc<Mesh>,
    data: ProblemData,
    inner: BoundaryIndexMap,
    outer: BoundaryIndexMap,
    system: LinearSystem,
    /// `∫ f v + ∫_{Γ_a} k u_a v`, the part of the load that does not depend on `q`.
    fixed_load: Vec<f64>,
}

impl ForwardModel {
    pub fn new(mesh: Arc<Mesh>, data: ProblemData) -> Result<Self> {
        let matrix = assemble_system(&mesh, &data)?;
        Self::with_system(mesh, data, LinearSystem::new(matrix)?)
    }

    pub fn with_system(mesh: Arc<Mesh>, data: ProblemData, system: LinearSystem) -> Result<Self> {
        let inner = boundary_map(&mesh, Tag::GammaI)?;
        let outer = boundary_map(&mesh, Tag::GammaA)?;
        let mut fixed_load = source_load(&mesh, &data.f);
        for (b, s) in fixed_load.iter_mut().zip(ambient_load(&mesh, &outer, &data.k, &data.u_a)) {
            *b += s;
        }
        Ok(ForwardModel {
            mesh,
            data,
            inner,
            outer,
            system,
            fixed_load,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn data(&self) -> &ProblemData {
        &self.data
    }

    pub fn inner(&self) -> &BoundaryIndexMap {
        &self.inner
    }

    pub fn outer(&self) -> &BoundaryIndexMap {
        &self.outer
    }

    pub fn map(&self, tag: Tag) -> &BoundaryIndexMap {
        match tag {
            Tag::GammaI => &self.inner,
            Tag::GammaA => &self.outer,
        }
    }

    pub fn system(&self) -> &LinearSystem {
        &self.system
    }

    /// Solution of the full problem with flux `q`.
    pub fn solve(&self, q: &BoundaryVector) -> Result<ScalarField> {
        let mut b = flux_load(&self.mesh, &self.inner, q)?;
        for (bi, s) in b.iter_mut().zip(&self.fixed_load) {
            *bi += s;
        }
        solve_forward(&self.mesh, &self.system, &b)
    }

    /// Solution with `f ≡ 0`, `u_a ≡ 0`: the linear part `q ↦ S q − S 0`.
    pub fn solve_flux_only(&self, q: &BoundaryVector) -> Result<ScalarField> {
        let b = flux_load(&self.mesh, &self.inner, q)?;
        solve_forward(&self.mesh, &self.system, &b)
    }

    /// Solves `A u = P_aᵀ w` for a load concentrated on Γ_a nodes.
    pub(crate) fn solve_outer_load(&self, w: &[f64]) -> Result<Vec<f64>> {
        let mut b = vec![0.0; self.mesh.n_vertices()];
        for (i, &v) in self.outer.vertices.iter().enumerate() {
            b[v] = w[i];
        }
        self.system.solve(&b)
    }

    pub fn trace(&self, u: &ScalarField, tag: Tag) -> Result<BoundaryVector> {
        if u.len() != self.mesh.n_vertices() {
            return Err(Error::DimensionMismatch {
                expected: self.mesh.n_vertices(),
                found: u.len(),
            });
        }
        Ok(trace(self.map(tag), u))
    }
}

/// Polar angle of a point in `[0, 2π)`.
fn polar_angle(p: [f64; 2]) -> f64 {
    let a = p[1].atan2(p[0]);
    if a < 0.0 {
        a + 2.0 * PI
    } else {
        a
    }
}

/// Transfers a boundary function between two discretizations of the same
/// circle by linear interpolation in arc length (the polar angle).
pub fn transfer_boundary(
    src_mesh: &Mesh,
    src_map: &BoundaryIndexMap,
    values: &BoundaryVector,
    dst_mesh: &Mesh,
    dst_map: &BoundaryIndexMap,
) -> Result<BoundaryVector> {
    values.check(src_map)?;
    if src_map.tag != dst_map.tag {
        return Err(Error::TagMismatch {
            expected: src_map.tag,
            found: dst_map.tag,
        });
    }
    let mut nodes: Vec<(f64, f64)> = src_map
        .vertices
        .iter()
        .zip(&values.values)
        .map(|(&v, &val)| (polar_angle(src_mesh.vertices()[v]), val))
        .collect();
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = nodes.len();
    let out = dst_map
        .vertices
        .iter()
        .map(|&v| {
            let theta = polar_angle(dst_mesh.vertices()[v]);
            // First node with angle > theta, cyclically.
            let hi = nodes.partition_point(|&(a, _)| a <= theta);
            let (a0, v0) = if hi == 0 {
                (nodes[n - 1].0 - 2.0 * PI, nodes[n - 1].1)
            } else {
                nodes[hi - 1]
            };
            let (a1, v1) = if hi == n {
                (nodes[0].0 + 2.0 * PI, nodes[0].1)
            } else {
                nodes[hi]
            };
            let t = (theta - a0) / (a1 - a0);
            (1.0 - t) * v0 + t * v1
        })
        .collect();
    Ok(BoundaryVector::new(dst_map.tag, out))
}

#[cfg(test)]
fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = norm2(a).max(norm2(b));
    if s == 0.0 {
        norm2(&d)
    } else {
        norm2(&d) / s
    }
}
