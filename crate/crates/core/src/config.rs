//! TOML run configuration.
//!
//! ```toml
//! kappa = 0.9
//! s = 0.5
//! eps = 0.01
//! tau_d = 1.5
//! m0 = 10.0
//! seed = 0
//!
//! [mesh]
//! r_inner = 0.5
//! r_outer = 1.0
//! h = 0.05
//! refinements = 0
//!
//! [problem]            # each entry is a number or a path to a values file
//! alpha = 1.0
//! k = 1.0
//! f = 0.0
//! u_a = 0.0
//!
//! [rates]
//! h = 0.025
//! data_refinements = 1
//! delta_grid = [1e-2, 1e-3]
//! seeds = [0, 1, 2, 3, 4]
//! rule = "discrepancy"   # or "fixed" with rho_scale, rho_power
//!
//! [vsc]
//! n_calibration = 100
//! n_samples = 200
//!
//! [stability]
//! n_samples = 100
//! n_holdout = 50
//! ```
//!
//! Every key is optional. Unknown keys, wrong types and out-of-range values
//! are schema errors naming the offending key.
//!
//! A values file holds one number per line: one per mesh vertex for `alpha`
//! and `f`, one per Γ_a loop vertex for `k` and `u_a`. Relative paths are
//! resolved against the directory of the configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fem::{BoundaryVector, ProblemData};
use crate::mesh::{boundary_map, Mesh, Tag};
use crate::rates::{default_delta_grid, ExperimentConfig, ParameterRule, ProblemConstants};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum FieldValue {
    Constant(f64),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshConfig {
    pub r_inner: f64,
    pub r_outer: f64,
    pub h: f64,
    pub refinements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemConfig {
    pub alpha: FieldValue,
    pub k: FieldValue,
    pub f: FieldValue,
    pub u_a: FieldValue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum RuleConfig {
    Discrepancy,
    Fixed { rho_scale: f64, rho_power: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatesConfig {
    pub h: f64,
    pub data_refinements: usize,
    pub delta_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(flatten)]
    pub rule: RuleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VscConfig {
    pub n_calibration: usize,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityConfig {
    pub n_samples: usize,
    pub n_holdout: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub kappa: f64,
    pub s: f64,
    pub eps: f64,
    pub tau_d: f64,
    pub m0: f64,
    pub seed: u64,
    pub mesh: MeshConfig,
    pub problem: ProblemConfig,
    pub rates: RatesConfig,
    pub vsc: VscConfig,
    pub stability: StabilityConfig,
    /// Directory against which relative value-file paths are resolved.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            kappa: 0.9,
            s: 0.5,
            eps: 0.01,
            tau_d: 1.5,
            m0: 10.0,
            seed: 0,
            mesh: MeshConfig { r_inner: 0.5, r_outer: 1.0, h: 0.05, refinements: 0 },
            problem: ProblemConfig {
                alpha: FieldValue::Constant(1.0),
                k: FieldValue::Constant(1.0),
                f: FieldValue::Constant(0.0),
                u_a: FieldValue::Constant(0.0),
            },
            rates: RatesConfig {
                h: 0.025,
                data_refinements: 1,
                delta_grid: default_delta_grid(),
                seeds: (0..5).collect(),
                rule: RuleConfig::Discrepancy,
            },
            vsc: VscConfig { n_calibration: 100, n_samples: 200 },
            stability: StabilityConfig { n_samples: 100, n_holdout: 50 },
            base_dir: PathBuf::from("."),
        }
    }
}

fn schema(key: &str, msg: impl Into<String>) -> Error {
    Error::Schema { key: key.to_string(), msg: msg.into() }
}

fn type_name(v: &toml::Value) -> &'static str {
    match v {
        toml::Value::String(_) => "string",
        toml::Value::Integer(_) => "integer",
        toml::Value::Float(_) => "float",
        toml::Value::Boolean(_) => "boolean",
        toml::Value::Datetime(_) => "datetime",
        toml::Value::Array(_) => "array",
        toml::Value::Table(_) => "table",
    }
}

/// Consumes the keys of one TOML table, rejecting leftovers.
struct Section {
    path: String,
    table: toml::Table,
}

impl Section {
    fn new(path: &str, table: toml::Table) -> Self {
        Section { path: path.to_string(), table }
    }

    fn key(&self, name: &str) -> String {
        if self.path.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.path)
        }
    }

    fn float(&mut self, name: &str, default: f64) -> Result<f64> {
        match self.table.remove(name) {
            None => Ok(default),
            Some(v) => as_float(&self.key(name), &v),
        }
    }

    fn uint(&mut self, name: &str, default: u64) -> Result<u64> {
        match self.table.remove(name) {
            None => Ok(default),
            Some(v) => as_uint(&self.key(name), &v),
        }
    }

    fn string(&mut self, name: &str) -> Result<Option<String>> {
        match self.table.remove(name) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(schema(&self.key(name), format!("expected a string, found {}", type_name(&v)))),
        }
    }

    fn field(&mut self, name: &str, default: FieldValue) -> Result<FieldValue> {
        match self.table.remove(name) {
            None => Ok(default),
            Some(toml::Value::String(s)) => Ok(FieldValue::File(PathBuf::from(s))),
            Some(v) => Ok(FieldValue::Constant(as_float(&self.key(name), &v).map_err(|_| {
                schema(
                    &self.key(name),
                    format!("expected a number or a file path, found {}", type_name(&v)),
                )
            })?)),
        }
    }

    fn array(&mut self, name: &str) -> Result<Option<Vec<toml::Value>>> {
        match self.table.remove(name) {
            None => Ok(None),
            Some(toml::Value::Array(a)) => Ok(Some(a)),
            Some(v) => Err(schema(&self.key(name), format!("expected an array, found {}", type_name(&v)))),
        }
    }

    fn section(&mut self, name: &str) -> Result<Section> {
        match self.table.remove(name) {
            None => Ok(Section::new(&self.key(name), toml::Table::new())),
            Some(toml::Value::Table(t)) => Ok(Section::new(&self.key(name), t)),
            Some(v) => Err(schema(&self.key(name), format!("expected a table, found {}", type_name(&v)))),
        }
    }

    fn finish(self) -> Result<()> {
        match self.table.keys().next() {
            None => Ok(()),
            Some(k) => Err(schema(&self.key(k), "unknown key")),
        }
    }
}

fn as_float(key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(x) if x.is_finite() => Ok(*x),
        toml::Value::Float(_) => Err(schema(key, "expected a finite number")),
        toml::Value::Integer(i) => Ok(*i as f64),
        other => Err(schema(key, format!("expected a number, found {}", type_name(other)))),
    }
}

fn as_uint(key: &str, v: &toml::Value) -> Result<u64> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        toml::Value::Integer(_) => Err(schema(key, "expected a non-negative integer")),
        other => Err(schema(key, format!("expected a non-negative integer, found {}", type_name(other)))),
    }
}

fn check(key: &str, ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(schema(key, msg))
    }
}

pub fn parse_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut cfg = parse_config_str(&text)?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(cfg)
}

pub fn parse_config_str(text: &str) -> Result<Config> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
        let msg = e.message().to_string();
        schema("<document>", msg)
    })?;
    let d = Config::default();
    let mut root = Section::new("", table);

    let kappa = root.float("kappa", d.kappa)?;
    check("kappa", kappa > 0.0 && kappa < 1.0, "must lie in the open interval (0, 1)")?;
    let s = root.float("s", d.s)?;
    check("s", s > 0.0 && s <= 0.5, "must lie in (0, 1/2]")?;
    let eps = root.float("eps", d.eps)?;
    check("eps", eps > 0.0, "must be positive")?;
    let tau_d = root.float("tau_d", d.tau_d)?;
    check("tau_d", tau_d > 1.0, "must exceed 1")?;
    let m0 = root.float("m0", d.m0)?;
    check("m0", m0 > 0.0, "must be positive")?;
    let seed = root.uint("seed", d.seed)?;

    let mut m = root.section("mesh")?;
    let mesh = MeshConfig {
        r_inner: m.float("r_inner", d.mesh.r_inner)?,
        r_outer: m.float("r_outer", d.mesh.r_outer)?,
        h: m.float("h", d.mesh.h)?,
        refinements: m.uint("refinements", d.mesh.refinements as u64)? as usize,
    };
    check("mesh.r_inner", mesh.r_inner > 0.0, "must be positive")?;
    check("mesh.r_outer", mesh.r_outer > mesh.r_inner, "must exceed mesh.r_inner")?;
    check("mesh.h", mesh.h > 0.0, "must be positive")?;
    m.finish()?;

    let mut p = root.section("problem")?;
    let problem = ProblemConfig {
        alpha: p.field("alpha", d.problem.alpha)?,
        k: p.field("k", d.problem.k)?,
        f: p.field("f", d.problem.f)?,
        u_a: p.field("u_a", d.problem.u_a)?,
    };
    if let FieldValue::Constant(a) = problem.alpha {
        check("problem.alpha", a > 0.0, "must be positive")?;
    }
    if let FieldValue::Constant(k) = problem.k {
        check("problem.k", k > 0.0, "must be positive")?;
    }
    p.finish()?;

    let mut r = root.section("rates")?;
    let h = r.float("h", d.rates.h)?;
    check("rates.h", h > 0.0, "must be positive")?;
    let data_refinements = r.uint("data_refinements", d.rates.data_refinements as u64)? as usize;
    check("rates.data_refinements", data_refinements >= 1, "must be at least 1")?;
    let delta_grid = match r.array("delta_grid")? {
        None => d.rates.delta_grid.clone(),
        Some(a) => a
            .iter()
            .enumerate()
            .map(|(i, v)| as_float(&format!("rates.delta_grid[{i}]"), v))
            .collect::<Result<Vec<f64>>>()?,
    };
    check("rates.delta_grid", !delta_grid.is_empty(), "must not be empty")?;
    check("rates.delta_grid", delta_grid.iter().all(|&x| x > 0.0), "entries must be positive")?;
    check(
        "rates.delta_grid",
        delta_grid.windows(2).all(|w| w[1] < w[0]),
        "must be strictly decreasing",
    )?;
    let seeds = match r.array("seeds")? {
        None => d.rates.seeds.clone(),
        Some(a) => a
            .iter()
            .enumerate()
            .map(|(i, v)| as_uint(&format!("rates.seeds[{i}]"), v))
            .collect::<Result<Vec<u64>>>()?,
    };
    check("rates.seeds", !seeds.is_empty(), "must not be empty")?;
    let rule = match r.string("rule")?.as_deref() {
        None | Some("discrepancy") => RuleConfig::Discrepancy,
        Some("fixed") => {
            let rho_scale = r.float("rho_scale", 1.0)?;
            check("rates.rho_scale", rho_scale > 0.0, "must be positive")?;
            RuleConfig::Fixed { rho_scale, rho_power: r.float("rho_power", 1.0)? }
        }
        Some(other) => {
            return Err(schema("rates.rule", format!("expected \"discrepancy\" or \"fixed\", found \"{other}\"")))
        }
    };
    r.finish()?;

    let mut v = root.section("vsc")?;
    let vsc = VscConfig {
        n_calibration: v.uint("n_calibration", d.vsc.n_calibration as u64)? as usize,
        n_samples: v.uint("n_samples", d.vsc.n_samples as u64)? as usize,
    };
    check("vsc.n_calibration", vsc.n_calibration >= 1, "must be at least 1")?;
    v.finish()?;

    let mut st = root.section("stability")?;
    let stability = StabilityConfig {
        n_samples: st.uint("n_samples", d.stability.n_samples as u64)? as usize,
        n_holdout: st.uint("n_holdout", d.stability.n_holdout as u64)? as usize,
    };
    check(
        "stability.n_samples",
        stability.n_samples >= crate::stability::MIN_FIT_SAMPLES,
        "must be at least 50",
    )?;
    st.finish()?;
    root.finish()?;

    Ok(Config {
        kappa,
        s,
        eps,
        tau_d,
        m0,
        seed,
        mesh,
        problem,
        rates: RatesConfig { h, data_refinements, delta_grid, seeds, rule },
        vsc,
        stability,
        base_dir: PathBuf::from("."),
    })
}

fn read_values(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::with_capacity(expected);
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t
            .parse()
            .map_err(|_| Error::malformed(path, i + 1, format!("cannot parse `{t}`")))?;
        out.push(v);
    }
    if out.len() != expected {
        return Err(Error::malformed(
            path,
            text.lines().count(),
            format!("expected {expected} values, found {}", out.len()),
        ));
    }
    Ok(out)
}

impl Config {
    fn resolve(&self, value: &FieldValue, n: usize) -> Result<Vec<f64>> {
        match value {
            FieldValue::Constant(c) => Ok(vec![*c; n]),
            FieldValue::File(p) => read_values(&self.base_dir.join(p), n),
        }
    }

    pub fn problem_data(&self, mesh: &Mesh) -> Result<ProblemData> {
        let outer = boundary_map(mesh, Tag::GammaA)?;
        let n = mesh.n_vertices();
        let data = ProblemData {
            alpha: self.resolve(&self.problem.alpha, n)?,
            k: BoundaryVector::new(Tag::GammaA, self.resolve(&self.problem.k, outer.len())?),
            f: self.resolve(&self.problem.f, n)?,
            u_a: BoundaryVector::new(Tag::GammaA, self.resolve(&self.problem.u_a, outer.len())?),
        };
        data.validate(mesh)?;
        Ok(data)
    }

    /// Problem data of the homogeneous problem (`f ≡ 0`, `u_a ≡ 0`).
    pub fn homogeneous_data(&self, mesh: &Mesh) -> Result<ProblemData> {
        Ok(self.problem_data(mesh)?.homogeneous())
    }

    pub fn problem_constants(&self) -> Result<ProblemConstants> {
        let get = |key: &str, v: &FieldValue| match v {
            FieldValue::Constant(c) => Ok(*c),
            FieldValue::File(_) => Err(schema(
                &format!("problem.{key}"),
                "the rate study needs constant coefficients",
            )),
        };
        Ok(ProblemConstants {
            alpha: get("alpha", &self.problem.alpha)?,
            k: get("k", &self.problem.k)?,
            f: get("f", &self.problem.f)?,
            u_a: get("u_a", &self.problem.u_a)?,
        })
    }

    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        Ok(ExperimentConfig {
            r_inner: self.mesh.r_inner,
            r_outer: self.mesh.r_outer,
            h: self.rates.h,
            data_refinements: self.rates.data_refinements,
            problem: self.problem_constants()?,
            s: self.s,
            kappa: self.kappa,
            eps: self.eps,
            m0: self.m0,
            delta_grid: self.rates.delta_grid.clone(),
            seeds: self.rates.seeds.clone(),
            flux_seed: self.seed,
            rule: match self.rates.rule {
                RuleConfig::Discrepancy => ParameterRule::Discrepancy { tau: self.tau_d },
                RuleConfig::Fixed { rho_scale, rho_power } => ParameterRule::Fixed {
                    scale: rho_scale,
                    power: rho_power,
                },
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_annulus_mesh;

    fn schema_key(text: &str) -> String {
        match parse_config_str(text) {
            Err(Error::Schema { key, .. }) => key,
            other => panic!("expected a schema error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let c = parse_config_str("").unwrap();
        assert_eq!(c, Config::default());
        assert_eq!((c.kappa, c.s, c.eps, c.tau_d, c.m0), (0.9, 0.5, 0.01, 1.5, 10.0));
        assert_eq!((c.mesh.r_inner, c.mesh.r_outer), (0.5, 1.0));
        assert_eq!(c.problem.alpha, FieldValue::Constant(1.0));
        assert_eq!(c.problem.u_a, FieldValue::Constant(0.0));
        assert_eq!(c.experiment_config().unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn domain_guards() {
        assert_eq!(schema_key("kappa = 1.5"), "kappa");
        assert_eq!(schema_key("s = 0.7"), "s");
        assert_eq!(schema_key("tau_d = 1.0"), "tau_d");
        assert_eq!(schema_key("[rates]\ndelta_grid = [1e-3, 1e-2]"), "rates.delta_grid");
        assert_eq!(schema_key("[rates]\ndata_refinements = 0"), "rates.data_refinements");
        assert_eq!(schema_key("[mesh]\nr_outer = 0.4"), "mesh.r_outer");
    }

    #[test]
    fn unknown_and_mistyped_keys() {
        assert_eq!(schema_key("kapa = 0.5"), "kapa");
        assert_eq!(schema_key("[mesh]\nradius = 1"), "mesh.radius");
        assert_eq!(schema_key("[rates]\nseeds = [1, -2]"), "rates.seeds[1]");
        assert_eq!(schema_key("seed = \"x\""), "seed");
        assert_eq!(schema_key("mesh = 3"), "mesh");
        assert_eq!(schema_key("[problem]\nalpha = true"), "problem.alpha");
        assert_eq!(schema_key("[rates]\nrule = \"magic\""), "rates.rule");
        assert_eq!(schema_key("kappa = "), "<document>");
    }

    #[test]
    fn full_config() {
        let text = r#"
kappa = 0.5
s = 0.25
seed = 7
[mesh]
h = 0.1
[problem]
alpha = 2
u_a = 0.5
[rates]
delta_grid = [1e-2, 1e-3, 1e-4, 1e-5]
seeds = [1, 2]
rule = "fixed"
rho_scale = 0.1
rho_power = 1.5
[vsc]
n_calibration = 10
n_samples = 20
[stability]
n_samples = 60
n_holdout = 10
"#;
        let c = parse_config_str(text).unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.problem.alpha, FieldValue::Constant(2.0));
        let e = c.experiment_config().unwrap();
        assert_eq!(e.rule, ParameterRule::Fixed { scale: 0.1, power: 1.5 });
        assert_eq!(e.seeds, vec![1, 2]);
        assert_eq!(e.kappa, 0.5);
        assert_eq!(e.problem.alpha, 2.0);
    }

    #[test]
    fn value_files_are_resolved() {
        let dir = tempfile::tempdir().unwrap();
        let mesh = generate_annulus_mesh(0.5, 1.0, 0.2).unwrap();
        let n = mesh.n_vertices();
        let alpha: String = (0..n).map(|i| format!("{}\n", 1.0 + i as f64 * 1e-3)).collect();
        fs::write(dir.path().join("alpha.txt"), alpha).unwrap();
        let cfg_path = dir.path().join("run.toml");
        fs::write(&cfg_path, "[problem]\nalpha = \"alpha.txt\"\n").unwrap();
        let c = parse_config(&cfg_path).unwrap();
        let data = c.problem_data(&mesh).unwrap();
        assert_eq!(data.alpha[3], 1.003);
        assert!(matches!(c.experiment_config(), Err(Error::Schema { .. })));

        fs::write(dir.path().join("alpha.txt"), "1.0\n2.0\n").unwrap();
        assert!(matches!(c.problem_data(&mesh), Err(Error::MalformedFile { .. })));
        assert!(parse_config(&dir.path().join("missing.toml")).unwrap_err().is_input_error());
    }
}
