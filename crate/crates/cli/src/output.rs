//! CSV files, digests and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use fluxinv::fem::BoundaryVector;
use fluxinv::mesh::BoundaryIndexMap;
use fluxinv::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const BOUNDARY_HEADER: &str = "index,vertex,arc,value";
pub const MANIFEST: &str = "manifest.json";

/// Shortest round-trip representation.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

/// Collects output files and their digests.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        Ok(OutDir { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        write_atomic(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv(&mut self, name: &str, header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
        let mut text = String::from(header);
        text.push('\n');
        for row in rows {
            text.push_str(&row.join(","));
            text.push('\n');
        }
        self.write(name, text.as_bytes())
    }

    pub fn boundary(&mut self, name: &str, map: &BoundaryIndexMap, v: &BoundaryVector) -> Result<()> {
        let arc = map.arc_coordinates();
        let rows = (0..map.len()).map(|i| {
            vec![i.to_string(), map.vertices[i].to_string(), num(arc[i]), num(v.values[i])]
        });
        self.csv(name, BOUNDARY_HEADER, rows)
    }

    /// Records files written by other code.
    pub fn adopt(&mut self, paths: impl IntoIterator<Item = PathBuf>) {
        self.written.extend(paths);
    }

    pub fn finish(self, manifest: Manifest) -> Result<()> {
        let mut outputs = BTreeMap::new();
        for p in &self.written {
            outputs.insert(display_name(&self.dir, p), digest_file(p)?);
        }
        let full = ManifestFile { outputs, ..manifest.into_file() };
        let mut json = serde_json::to_vec_pretty(&full).map_err(|e| Error::InvalidData(e.to_string()))?;
        json.push(b'\n');
        write_atomic(&self.path(MANIFEST), &json)
    }
}

fn display_name(dir: &Path, p: &Path) -> String {
    p.strip_prefix(dir).unwrap_or(p).to_string_lossy().into_owned()
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source: e }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
        f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
        f.sync_all().map_err(|e| io_err(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

pub fn digest_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Default)]
pub struct Manifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub runtime: Duration,
}

impl Manifest {
    pub fn new(subcommand: &str, config: serde_json::Value) -> Self {
        Manifest { subcommand: subcommand.to_string(), config, ..Default::default() }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.to_string_lossy().into_owned(), digest_file(path)?);
        Ok(())
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.to_string(), seed);
    }

    fn into_file(self) -> ManifestFile {
        ManifestFile {
            subcommand: self.subcommand,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: BTreeMap::new(),
            runtime_seconds: self.runtime.as_secs_f64(),
        }
    }
}

#[derive(Serialize)]
struct ManifestFile {
    subcommand: String,
    version: String,
    config: serde_json::Value,
    seeds: BTreeMap<String, u64>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
    runtime_seconds: f64,
}

/// Reads a boundary CSV written by [`OutDir::boundary`] for the loop `map`.
pub fn read_boundary(path: &Path, map: &BoundaryIndexMap) -> Result<BoundaryVector> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let malformed = |line: usize, msg: String| Error::MalformedFile { path: path.to_path_buf(), line, msg };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == BOUNDARY_HEADER => {}
        _ => return Err(malformed(1, format!("expected header `{BOUNDARY_HEADER}`"))),
    }
    let mut values = Vec::with_capacity(map.len());
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(malformed(i + 1, format!("expected 4 fields, found {}", fields.len())));
        }
        let vertex: usize = fields[1]
            .parse()
            .map_err(|_| malformed(i + 1, format!("cannot parse vertex `{}`", fields[1])))?;
        let k = values.len();
        if k >= map.len() || map.vertices[k] != vertex {
            return Err(malformed(i + 1, format!("vertex {vertex} does not match the {} loop order", map.tag)));
        }
        let v: f64 = fields[3]
            .parse()
            .map_err(|_| malformed(i + 1, format!("cannot parse value `{}`", fields[3])))?;
        values.push(v);
    }
    if values.len() != map.len() {
        return Err(malformed(
            text.lines().count(),
            format!("expected {} values, found {}", map.len(), values.len()),
        ));
    }
    Ok(BoundaryVector::new(map.tag, values))
}
