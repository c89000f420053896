//! Triangulated annular domains with two tagged boundary loops.
//!
//! The inner circle carries the [`Tag::GammaI`] loop (the inaccessible
//! boundary) and the outer circle the [`Tag::GammaA`] loop (the accessible
//! boundary). Both circles are centred at the origin; refinement relies on
//! this to project new boundary vertices back onto the exact circle.

mod io;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;

pub use io::{load_mesh, read_mesh, save_mesh, write_mesh};

use crate::error::{Error, Result};

/// Boundary component label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    /// Inaccessible inner boundary carrying the unknown flux.
    GammaI,
    /// Accessible outer boundary carrying the measurements.
    GammaA,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::GammaI => "GammaI",
            Tag::GammaA => "GammaA",
        }
    }

    pub fn parse(s: &str) -> Option<Tag> {
        match s {
            "GammaI" => Some(Tag::GammaI),
            "GammaA" => Some(Tag::GammaA),
            _ => None,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub tag: Tag,
}

/// Conforming triangulation with positively oriented triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary_edges: Vec<BoundaryEdge>,
}

impl Mesh {
    /// Builds a mesh and checks every structural invariant.
    pub fn new(
        vertices: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
    ) -> Result<Self> {
        let mesh = Mesh {
            vertices,
            triangles,
            boundary_edges,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    /// Area of the polygonal domain.
    pub fn area(&self) -> f64 {
        (0..self.n_triangles()).map(|t| self.signed_area(t)).sum()
    }

    /// Maximum edge length.
    pub fn h(&self) -> f64 {
        let mut h: f64 = 0.0;
        for tri in &self.triangles {
            for k in 0..3 {
                let p = self.vertices[tri[k]];
                let q = self.vertices[tri[(k + 1) % 3]];
                h = h.max(dist(p, q));
            }
        }
        h
    }

    pub fn has_tag(&self, tag: Tag) -> bool {
        self.boundary_edges.iter().any(|e| e.tag == tag)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.vertices.iter().any(|v| !v[0].is_finite() || !v[1].is_finite()) {
            return Err(Error::InvalidMesh("non-finite vertex coordinate".into()));
        }
        let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} references a vertex out of range"
                )));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(Error::InvalidMesh(format!("triangle {t} repeats a vertex")));
            }
            let area = self.signed_area(t);
            if area.is_nan() || area <= 0.0 {
                return Err(Error::InvalidMesh(format!(
                    "triangle {t} has non-positive signed area {area:e}"
                )));
            }
            for k in 0..3 {
                *edge_count.entry(edge_key(tri[k], tri[(k + 1) % 3])).or_default() += 1;
            }
        }
        if let Some((e, c)) = edge_count.iter().find(|(_, &c)| c > 2) {
            return Err(Error::InvalidMesh(format!(
                "edge {e:?} shared by {c} triangles"
            )));
        }

        let mut seen = HashMap::new();
        for (i, e) in self.boundary_edges.iter().enumerate() {
            if e.a >= n || e.b >= n || e.a == e.b {
                return Err(Error::InvalidMesh(format!("boundary edge {i} is invalid")));
            }
            let key = edge_key(e.a, e.b);
            if edge_count.get(&key) != Some(&1) {
                return Err(Error::InvalidMesh(format!(
                    "boundary edge {i} ({}, {}) does not belong to exactly one triangle",
                    e.a, e.b
                )));
            }
            if seen.insert(key, i).is_some() {
                return Err(Error::InvalidMesh(format!("boundary edge {i} is duplicated")));
            }
        }
        let open_edges = edge_count.values().filter(|&&c| c == 1).count();
        if open_edges != self.boundary_edges.len() {
            return Err(Error::InvalidMesh(format!(
                "{open_edges} edges lie on the boundary but {} are tagged",
                self.boundary_edges.len()
            )));
        }

        let inner = boundary_map(self, Tag::GammaI)?;
        let outer = boundary_map(self, Tag::GammaA)?;
        let mut on_inner = vec![false; n];
        for &v in &inner.vertices {
            on_inner[v] = true;
        }
        if outer.vertices.iter().any(|&v| on_inner[v]) {
            return Err(Error::InvalidMesh(
                "GammaI and GammaA loops share a vertex".into(),
            ));
        }
        Ok(())
    }
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

pub(crate) fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

pub(crate) fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

fn norm(p: [f64; 2]) -> f64 {
    p[0].hypot(p[1])
}

/// Triangulates the annulus `r_inner < |x| < r_outer` with rings of vertices.
///
/// Ring radii are equispaced with spacing at most `h·√3/2`; each ring holds
/// `ceil(2πr/h)` equispaced vertices, odd rings rotated by half a step. Adjacent
/// rings are zipped together by angular order.
pub fn generate_annulus_mesh(r_inner: f64, r_outer: f64, h_target: f64) -> Result<Mesh> {
    if !(r_inner > 0.0 && r_outer.is_finite() && h_target > 0.0) {
        return Err(Error::InvalidGeometry(format!(
            "need positive radii and mesh size, got r_inner={r_inner}, r_outer={r_outer}, h={h_target}"
        )));
    }
    if r_inner >= r_outer {
        return Err(Error::InvalidGeometry(format!(
            "r_inner={r_inner} must be smaller than r_outer={r_outer}"
        )));
    }
    if h_target >= r_outer - r_inner {
        return Err(Error::InvalidGeometry(format!(
            "h={h_target} must be smaller than the annulus width {}",
            r_outer - r_inner
        )));
    }

    let width = r_outer - r_inner;
    let n_layers = (width / (h_target * 3f64.sqrt() / 2.0)).ceil().max(1.0) as usize;
    let mut vertices = Vec::new();
    let mut rings: Vec<(usize, usize, f64)> = Vec::with_capacity(n_layers + 1); // (start, count, offset)
    for k in 0..=n_layers {
        let r = if k == n_layers {
            r_outer
        } else {
            r_inner + width * k as f64 / n_layers as f64
        };
        let count = ((2.0 * PI * r / h_target).ceil() as usize).max(8);
        let step = 2.0 * PI / count as f64;
        let offset = if k % 2 == 1 { 0.5 * step } else { 0.0 };
        let start = vertices.len();
        for j in 0..count {
            let theta = offset + step * j as f64;
            vertices.push([r * theta.cos(), r * theta.sin()]);
        }
        rings.push((start, count, offset));
    }

    let mut triangles = Vec::new();
    for k in 0..n_layers {
        let (sa, na, oa) = rings[k];
        let (sb, nb, ob) = rings[k + 1];
        let angle_a = |i: usize| oa + 2.0 * PI * i as f64 / na as f64;
        let angle_b = |j: usize| ob + 2.0 * PI * j as f64 / nb as f64;
        let va = |i: usize| sa + i % na;
        let vb = |j: usize| sb + j % nb;
        let (mut i, mut j) = (0usize, 0usize);
        while i < na || j < nb {
            let advance_a = if i == na {
                false
            } else if j == nb {
                true
            } else {
                angle_a(i + 1) <= angle_b(j + 1)
            };
            let tri = if advance_a {
                i += 1;
                [va(i - 1), va(i), vb(j)]
            } else {
                j += 1;
                [va(i), vb(j), vb(j - 1)]
            };
            triangles.push(orient(&vertices, tri));
        }
    }

    let mut boundary_edges = Vec::new();
    let (s0, n0, _) = rings[0];
    for j in 0..n0 {
        // Inner loop runs clockwise so the domain lies on its left.
        boundary_edges.push(BoundaryEdge {
            a: s0 + (j + 1) % n0,
            b: s0 + j,
            tag: Tag::GammaI,
        });
    }
    let (sl, nl, _) = rings[n_layers];
    for j in 0..nl {
        boundary_edges.push(BoundaryEdge {
            a: sl + j,
            b: sl + (j + 1) % nl,
            tag: Tag::GammaA,
        });
    }
    Mesh::new(vertices, triangles, boundary_edges)
}

fn orient(vertices: &[[f64; 2]], tri: [usize; 3]) -> [usize; 3] {
    if signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]) < 0.0 {
        [tri[0], tri[2], tri[1]]
    } else {
        tri
    }
}

/// Splits every triangle into four through its edge midpoints.
///
/// Midpoints of boundary edges are pushed radially onto the circle through
/// the edge's endpoints. Original vertices keep their indices.
pub fn refine_uniform(mesh: &Mesh) -> Result<Mesh> {
    let mut vertices = mesh.vertices.clone();
    let mut boundary_radius: HashMap<(usize, usize), f64> = HashMap::new();
    for e in &mesh.boundary_edges {
        let r = 0.5 * (norm(mesh.vertices[e.a]) + norm(mesh.vertices[e.b]));
        boundary_radius.insert(edge_key(e.a, e.b), r);
    }
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<[f64; 2]>| -> usize {
        *midpoint.entry(edge_key(a, b)).or_insert_with(|| {
            let (p, q) = (vertices[a], vertices[b]);
            let mut m = [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])];
            if let Some(&r) = boundary_radius.get(&edge_key(a, b)) {
                let scale = r / norm(m);
                m = [m[0] * scale, m[1] * scale];
            }
            vertices.push(m);
            vertices.len() - 1
        })
    };

    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    for &[a, b, c] in &mesh.triangles {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    let mut boundary_edges = Vec::with_capacity(2 * mesh.boundary_edges.len());
    for e in &mesh.boundary_edges {
        let m = mid(e.a, e.b, &mut vertices);
        boundary_edges.push(BoundaryEdge { a: e.a, b: m, tag: e.tag });
        boundary_edges.push(BoundaryEdge { a: m, b: e.b, tag: e.tag });
    }
    Mesh::new(vertices, triangles, boundary_edges)
}

/// Ordered traversal of one boundary loop with lumped arc-length weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryIndexMap {
    pub tag: Tag,
    /// Mesh vertex indices in loop order, starting at the smallest index.
    pub vertices: Vec<usize>,
    /// Half the sum of the two adjacent edge lengths, per vertex.
    pub weights: Vec<f64>,
    /// `edge_lengths[i]` is the length of the edge from `vertices[i]` to `vertices[i+1]`.
    pub edge_lengths: Vec<f64>,
    /// Mesh vertex index to position in the loop.
    local: HashMap<usize, usize>,
}

impl BoundaryIndexMap {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn perimeter(&self) -> f64 {
        self.edge_lengths.iter().sum()
    }

    /// Loop position of a mesh vertex, if the vertex lies on this loop.
    pub fn local_index(&self, vertex: usize) -> Option<usize> {
        self.local.get(&vertex).copied()
    }

    /// Cumulative arc length at each vertex, starting from 0.
    pub fn arc_coordinates(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for &l in &self.edge_lengths {
            s.push(acc);
            acc += l;
        }
        s
    }

    /// Consistent P1 mass matrix of the loop (cyclic tridiagonal).
    pub fn mass_matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        for (i, &l) in self.edge_lengths.iter().enumerate() {
            let j = (i + 1) % n;
            m[(i, i)] += l / 3.0;
            m[(j, j)] += l / 3.0;
            m[(i, j)] += l / 6.0;
            m[(j, i)] += l / 6.0;
        }
        m
    }

    /// Stiffness matrix of the 1D P1 Laplace–Beltrami operator along the loop.
    pub fn stiffness_matrix(&self) -> nalgebra::DMatrix<f64> {
        let n = self.len();
        let mut s = nalgebra::DMatrix::zeros(n, n);
        for (i, &l) in self.edge_lengths.iter().enumerate() {
            let j = (i + 1) % n;
            s[(i, i)] += 1.0 / l;
            s[(j, j)] += 1.0 / l;
            s[(i, j)] -= 1.0 / l;
            s[(j, i)] -= 1.0 / l;
        }
        s
    }
}

/// Ordered traversal of the loop tagged `tag`.
pub fn boundary_map(mesh: &Mesh, tag: Tag) -> Result<BoundaryIndexMap> {
    let mut next: HashMap<usize, usize> = HashMap::new();
    let mut n_edges = 0;
    for e in mesh.boundary_edges.iter().filter(|e| e.tag == tag) {
        if next.insert(e.a, e.b).is_some() {
            return Err(Error::InvalidMesh(format!(
                "vertex {} starts two {tag} edges",
                e.a
            )));
        }
        n_edges += 1;
    }
    if n_edges == 0 {
        return Err(Error::MissingTag(tag));
    }
    let start = *next.keys().min().expect("non-empty");
    let mut vertices = Vec::with_capacity(n_edges);
    let mut v = start;
    loop {
        vertices.push(v);
        v = *next.get(&v).ok_or_else(|| {
            Error::InvalidMesh(format!("{tag} loop is not closed at vertex {v}"))
        })?;
        if v == start {
            break;
        }
        if vertices.len() > n_edges {
            return Err(Error::InvalidMesh(format!("{tag} edges do not form a loop")));
        }
    }
    if vertices.len() != n_edges {
        return Err(Error::InvalidMesh(format!(
            "{tag} edges form more than one loop"
        )));
    }
    let n = vertices.len();
    let edge_lengths: Vec<f64> = (0..n)
        .map(|i| dist(mesh.vertices[vertices[i]], mesh.vertices[vertices[(i + 1) % n]]))
        .collect();
    let weights = (0..n)
        .map(|i| 0.5 * (edge_lengths[(i + n - 1) % n] + edge_lengths[i]))
        .collect();
    let local = vertices.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    Ok(BoundaryIndexMap {
        tag,
        vertices,
        weights,
        edge_lengths,
        local,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inner_edges(mesh: &Mesh) -> usize {
        mesh.boundary_edges().iter().filter(|e| e.tag == Tag::GammaI).count()
    }

    #[test]
    fn generated_mesh_satisfies_invariants() {
        let mesh = generate_annulus_mesh(0.5, 1.0, 0.1).unwrap();
        mesh.validate().unwrap();
        assert!((0..mesh.n_triangles()).all(|t| mesh.signed_area(t) > 0.0));
        assert!(mesh.has_tag(Tag::GammaI) && mesh.has_tag(Tag::GammaA));
        assert!(mesh.h() <= 1.5 * 0.1, "h = {}", mesh.h());
    }

    #[test]
    fn loops_inscribe_the_circles() {
        let mesh = generate_annulus_mesh(0.5, 1.0, 0.1).unwrap();
        for (tag, r) in [(Tag::GammaI, 0.5), (Tag::GammaA, 1.0)] {
            let map = boundary_map(&mesh, tag).unwrap();
            for &v in &map.vertices {
                assert!((norm(mesh.vertices()[v]) - r).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn halving_h_roughly_doubles_inner_edges() {
        let coarse = generate_annulus_mesh(0.5, 1.0, 0.1).unwrap();
        let fine = generate_annulus_mesh(0.5, 1.0, 0.05).unwrap();
        let ratio = inner_edges(&fine) as f64 / inner_edges(&coarse) as f64;
        assert!((1.8..=2.2).contains(&ratio), "ratio {ratio}");
        assert!(fine.h() <= 1.5 * 0.05);
    }

    #[test]
    fn invalid_geometry_is_rejected() {
        assert!(matches!(
            generate_annulus_mesh(1.0, 0.5, 0.1),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(matches!(
            generate_annulus_mesh(0.5, 1.0, 0.5),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(matches!(
            generate_annulus_mesh(0.0, 1.0, 0.1),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn refinement_quadruples_triangles_and_projects_boundary() {
        let mesh = generate_annulus_mesh(0.5, 1.0, 0.1).unwrap();
        let fine = refine_uniform(&mesh).unwrap();
        assert_eq!(fine.n_triangles(), 4 * mesh.n_triangles());
        fine.validate().unwrap();
        for (tag, r) in [(Tag::GammaI, 0.5), (Tag::GammaA, 1.0)] {
            let map = boundary_map(&fine, tag).unwrap();
            assert_eq!(map.len(), 2 * boundary_map(&mesh, tag).unwrap().len());
            for &v in &map.vertices {
                assert!((norm(fine.vertices()[v]) - r).abs() <= 1e-12);
            }
        }
        let ratio = fine.h() / mesh.h();
        assert!((0.45..=0.55).contains(&ratio), "ratio {ratio}");
        assert_eq!(&fine.vertices()[..mesh.n_vertices()], mesh.vertices());
    }

    #[test]
    fn boundary_weights_sum_to_perimeter() {
        let mesh = generate_annulus_mesh(0.5, 1.0, 0.05).unwrap();
        for tag in [Tag::GammaI, Tag::GammaA] {
            let map = boundary_map(&mesh, tag).unwrap();
            let total: f64 = map.weights.iter().sum();
            assert!((total - map.perimeter()).abs() <= 1e-12 * map.perimeter());
            assert!(map.weights.iter().all(|&w| w > 0.0));
        }
        let outer = boundary_map(&mesh, Tag::GammaA).unwrap();
        let rel = (outer.perimeter() - 2.0 * PI).abs() / (2.0 * PI);
        assert!(rel < 0.01, "rel {rel}");
    }

    #[test]
    fn weights_do_not_depend_on_loop_start() {
        let mesh = generate_annulus_mesh(0.5, 1.0, 0.1).unwrap();
        let map = boundary_map(&mesh, Tag::GammaA).unwrap();
        // Relabel vertices by a cyclic shift of the outer ring and compare weights per vertex.
        let n = map.len();
        let shift = 5;
        let mut perm: Vec<usize> = (0..mesh.n_vertices()).collect();
        for i in 0..n {
            perm[map.vertices[i]] = map.vertices[(i + shift) % n];
        }
        let mut vertices = mesh.vertices().to_vec();
        for (old, &new) in perm.iter().enumerate() {
            vertices[new] = mesh.vertices()[old];
        }
        let triangles = mesh
            .triangles()
            .iter()
            .map(|t| [perm[t[0]], perm[t[1]], perm[t[2]]])
            .collect();
        let edges = mesh
            .boundary_edges()
            .iter()
            .map(|e| BoundaryEdge { a: perm[e.a], b: perm[e.b], tag: e.tag })
            .collect();
        let relabeled = Mesh::new(vertices, triangles, edges).unwrap();
        let map2 = boundary_map(&relabeled, Tag::GammaA).unwrap();
        for (i, &v) in map.vertices.iter().enumerate() {
            let j = map2.local_index(perm[v]).unwrap();
            assert!((map.weights[i] - map2.weights[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn missing_tag_is_reported() {
        let mesh = generate_annulus_mesh(0.5, 1.0, 0.2).unwrap();
        let bare = Mesh {
            vertices: mesh.vertices.clone(),
            triangles: mesh.triangles.clone(),
            boundary_edges: mesh
                .boundary_edges
                .iter()
                .copied()
                .filter(|e| e.tag == Tag::GammaA)
                .collect(),
        };
        assert!(matches!(boundary_map(&bare, Tag::GammaI), Err(Error::MissingTag(Tag::GammaI))));
        assert!(bare.validate().is_err());
    }

    #[test]
    fn mass_and_stiffness_matrices_are_consistent() {
        let mesh = generate_annulus_mesh(0.5, 1.0, 0.1).unwrap();
        let map = boundary_map(&mesh, Tag::GammaI).unwrap();
        let m = map.mass_matrix();
        let s = map.stiffness_matrix();
        let ones = nalgebra::DVector::from_element(map.len(), 1.0);
        assert!((ones.dot(&(&m * &ones)) - map.perimeter()).abs() < 1e-13);
        assert!((&s * &ones).amax() < 1e-10);
    }
}
