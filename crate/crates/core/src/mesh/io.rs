//! Plain-text mesh files.
//!
//! ```text
//! VERTICES <n>
//! <x> <y>
//! TRIANGLES <n>
//! <a> <b> <c>
//! BOUNDARY_EDGES <n>
//! <a> <b> <GammaI|GammaA>
//! ```
//!
//! Coordinates use the shortest decimal representation that parses back to
//! the same `f64`, so a save/load round trip is bit-exact.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::{BoundaryEdge, Mesh, Tag};
use crate::error::{Error, Result};

pub fn write_mesh<W: Write>(mesh: &Mesh, mut w: W) -> std::io::Result<()> {
    writeln!(w, "VERTICES {}", mesh.vertices.len())?;
    for v in &mesh.vertices {
        writeln!(w, "{:?} {:?}", v[0], v[1])?;
    }
    writeln!(w, "TRIANGLES {}", mesh.triangles.len())?;
    for t in &mesh.triangles {
        writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(w, "BOUNDARY_EDGES {}", mesh.boundary_edges.len())?;
    for e in &mesh.boundary_edges {
        writeln!(w, "{} {} {}", e.a, e.b, e.tag)?;
    }
    Ok(())
}

pub fn save_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_mesh(mesh, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_mesh(file, path)
}

/// Parses a mesh; `origin` only labels error messages.
pub fn read_mesh<R: Read>(reader: R, origin: &Path) -> Result<Mesh> {
    let mut lines = Lines {
        inner: BufReader::new(reader),
        line: 0,
        origin,
    };

    let n_vertices = lines.header("VERTICES")?;
    let mut vertices = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        let fields = lines.record(2, "vertex")?;
        let x = lines.parse::<f64>(&fields[0])?;
        let y = lines.parse::<f64>(&fields[1])?;
        vertices.push([x, y]);
    }

    let n_triangles = lines.header("TRIANGLES")?;
    let mut triangles = Vec::with_capacity(n_triangles);
    for _ in 0..n_triangles {
        let fields = lines.record(3, "triangle")?;
        let mut t = [0usize; 3];
        for (slot, f) in t.iter_mut().zip(&fields) {
            *slot = lines.index(f, n_vertices)?;
        }
        triangles.push(t);
    }

    let n_edges = lines.header("BOUNDARY_EDGES")?;
    let mut boundary_edges = Vec::with_capacity(n_edges);
    for _ in 0..n_edges {
        let fields = lines.record(3, "boundary edge")?;
        let a = lines.index(&fields[0], n_vertices)?;
        let b = lines.index(&fields[1], n_vertices)?;
        let tag = Tag::parse(&fields[2])
            .ok_or_else(|| lines.error(format!("unknown boundary tag `{}`", fields[2])))?;
        boundary_edges.push(BoundaryEdge { a, b, tag });
    }
    if let Some(extra) = lines.next_nonempty()? {
        return Err(lines.error(format!("unexpected trailing content `{extra}`")));
    }

    Mesh::new(vertices, triangles, boundary_edges).map_err(|e| match e {
        Error::InvalidMesh(msg) => Error::malformed(origin, lines.line, msg),
        other => other,
    })
}

struct Lines<'a, R> {
    inner: BufReader<R>,
    line: usize,
    origin: &'a Path,
}

impl<R: Read> Lines<'_, R> {
    fn error(&self, msg: impl Into<String>) -> Error {
        Error::malformed(self.origin, self.line, msg)
    }

    fn next_nonempty(&mut self) -> Result<Option<String>> {
        let mut buf = String::new();
        loop {
            buf.clear();
            let n = self
                .inner
                .read_line(&mut buf)
                .map_err(|e| Error::io(self.origin, e))?;
            if n == 0 {
                return Ok(None);
            }
            self.line += 1;
            let trimmed = buf.trim();
            if !trimmed.is_empty() {
                return Ok(Some(trimmed.to_string()));
            }
        }
    }

    fn header(&mut self, section: &str) -> Result<usize> {
        let line = self
            .next_nonempty()?
            .ok_or_else(|| self.error(format!("unexpected end of file, expected {section}")))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(section) {
            return Err(self.error(format!("expected section {section}, found `{line}`")));
        }
        let count = parts
            .next()
            .ok_or_else(|| self.error(format!("{section} header lacks a count")))?;
        if parts.next().is_some() {
            return Err(self.error(format!("trailing fields in {section} header")));
        }
        self.parse::<usize>(count)
    }

    fn record(&mut self, n_fields: usize, what: &str) -> Result<Vec<String>> {
        let line = self
            .next_nonempty()?
            .ok_or_else(|| self.error(format!("unexpected end of file in {what} records")))?;
        let fields: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if fields.len() != n_fields {
            return Err(self.error(format!(
                "{what} record needs {n_fields} fields, found {}",
                fields.len()
            )));
        }
        Ok(fields)
    }

    fn parse<T: std::str::FromStr>(&self, s: &str) -> Result<T> {
        s.parse::<T>()
            .map_err(|_| self.error(format!("cannot parse `{s}`")))
    }

    fn index(&self, s: &str, n: usize) -> Result<usize> {
        let i = self.parse::<usize>(s)?;
        if i >= n {
            return Err(self.error(format!("vertex index {i} out of range (n = {n})")));
        }
        Ok(i)
    }
}
