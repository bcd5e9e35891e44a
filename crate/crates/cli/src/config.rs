//! Flat, sectioned key-value experiment configs.
//!
//! ```text
//! # comment
//! [domain]
//! kind = grid
//! extents = -1,1; -1,1
//! spacing = 0.125
//! norm = lp
//! p = inf
//! ```
//!
//! The schema is strict: unknown sections or keys are rejected with their
//! line number, and every consumed value (defaults included) is recorded
//! for the provenance file.

use anyhow::{anyhow, bail, Context, Result};
use pharmlab_core::norm::NormSpec;
use pharmlab_core::space::{Domain, GraphDomain, GridDomain};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug)]
struct RawValue {
    value: String,
    line: usize,
    consumed: std::cell::Cell<bool>,
}

#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, RawValue>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: BTreeMap<String, BTreeMap<String, RawValue>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| anyhow!("line {line_no}: unterminated section header"))?
                    .trim()
                    .to_string();
                if !matches!(name.as_str(), "domain" | "task" | "numeric" | "output") {
                    bail!("line {line_no}: unknown section [{name}]");
                }
                sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {line_no}: expected `key = value`"))?;
            let section = current
                .clone()
                .ok_or_else(|| anyhow!("line {line_no}: key outside any section"))?;
            let prev = sections.entry(section.clone()).or_default().insert(
                key.trim().to_string(),
                RawValue {
                    value: value.trim().to_string(),
                    line: line_no,
                    consumed: std::cell::Cell::new(false),
                },
            );
            if prev.is_some() {
                bail!("line {line_no}: duplicate key `{}` in [{section}]", key.trim());
            }
        }
        Ok(RawConfig { sections })
    }

    fn get(&self, section: &str, key: &str) -> Option<&RawValue> {
        self.sections.get(section).and_then(|s| {
            s.get(key).inspect(|v| {
                v.consumed.set(true);
            })
        })
    }

    fn reject_unconsumed(&self) -> Result<()> {
        for (section, keys) in &self.sections {
            for (key, v) in keys {
                if !v.consumed.get() {
                    bail!(
                        "line {}: unknown key `{key}` in section [{section}]",
                        v.line
                    );
                }
            }
        }
        Ok(())
    }
}

/// A reader that records every resolved value for the provenance file.
pub struct Resolver<'a> {
    raw: &'a RawConfig,
    pub resolved: Vec<(String, String)>,
}

impl<'a> Resolver<'a> {
    pub fn new(raw: &'a RawConfig) -> Self {
        Resolver { raw, resolved: Vec::new() }
    }

    fn record(&mut self, section: &str, key: &str, value: &str) {
        self.resolved.push((format!("{section}.{key}"), value.to_string()));
    }

    pub fn optional(&mut self, section: &str, key: &str) -> Option<String> {
        let v = self.raw.get(section, key).map(|v| v.value.clone());
        if let Some(val) = &v {
            self.record(section, key, val);
        }
        v
    }

    pub fn string(&mut self, section: &str, key: &str, default: &str) -> String {
        match self.raw.get(section, key) {
            Some(v) => {
                self.record(section, key, &v.value);
                v.value.clone()
            }
            None => {
                self.record(section, key, default);
                default.to_string()
            }
        }
    }

    pub fn required(&mut self, section: &str, key: &str) -> Result<String> {
        match self.raw.get(section, key) {
            Some(v) => {
                self.record(section, key, &v.value);
                Ok(v.value.clone())
            }
            None => bail!("missing required key `{key}` in section [{section}]"),
        }
    }

    pub fn f64(&mut self, section: &str, key: &str, default: f64) -> Result<f64> {
        let s = self.string(section, key, &format!("{default}"));
        parse_f64(&s).with_context(|| format!("key `{key}` in [{section}]"))
    }

    pub fn usize(&mut self, section: &str, key: &str, default: usize) -> Result<usize> {
        let s = self.string(section, key, &format!("{default}"));
        s.parse::<usize>().map_err(|e| anyhow!("key `{key}` in [{section}]: {e}"))
    }

    pub fn u64(&mut self, section: &str, key: &str, default: u64) -> Result<u64> {
        let s = self.string(section, key, &format!("{default}"));
        s.parse::<u64>().map_err(|e| anyhow!("key `{key}` in [{section}]: {e}"))
    }
}

pub fn parse_f64(s: &str) -> Result<f64> {
    match s.trim() {
        "inf" | "infinity" => Ok(f64::INFINITY),
        other => other.parse::<f64>().map_err(|e| anyhow!("bad number `{other}`: {e}")),
    }
}

fn parse_vec(s: &str) -> Result<Vec<f64>> {
    s.split(',').map(parse_f64).collect()
}

fn parse_rows(s: &str) -> Result<Vec<Vec<f64>>> {
    s.split(';').map(parse_vec).collect()
}

/// Fully resolved experiment configuration.
pub struct ExperimentConfig {
    pub domain: Domain,
    pub task: String,
    pub expect_fail: bool,
    pub task_keys: TaskKeys,
    pub numeric: NumericConfig,
    pub out_dir: PathBuf,
    pub resolved: Vec<(String, String)>,
}

/// Task-specific inputs, all optional at parse time; each task validates
/// what it needs.
#[derive(Clone, Debug, Default)]
pub struct TaskKeys {
    pub boundary: String,
    pub field: String,
    pub weight: String,
    pub case: String,
    pub map: String,
    pub line_base: Vec<f64>,
    pub line_dir: Vec<f64>,
    pub t_max: f64,
}

#[derive(Clone, Debug)]
pub struct NumericConfig {
    pub p: f64,
    pub seed: u64,
    pub bumps: usize,
    pub samples: usize,
    pub eps_start: f64,
    pub eps_ratio: f64,
    pub eps_steps: usize,
    pub max_iterations: usize,
    pub residual_tol: Option<f64>,
    pub delta_start: f64,
    pub delta_floor: f64,
    pub p0: f64,
    pub balls: usize,
}

pub const TASKS: [&str; 9] = [
    "calculus-suite",
    "divergence",
    "minimize",
    "certify",
    "sheaf",
    "compose",
    "maxprinciple",
    "busemann",
    "poincare",
];

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let raw = RawConfig::parse(&text)?;
    let mut r = Resolver::new(&raw);

    // [domain]
    let kind = r.string("domain", "kind", "grid");
    let domain = match kind.as_str() {
        "grid" => {
            let extents_s = r.string("domain", "extents", "-1,1; -1,1");
            let extents: Vec<(f64, f64)> = parse_rows(&extents_s)?
                .into_iter()
                .map(|row| {
                    if row.len() == 2 {
                        Ok((row[0], row[1]))
                    } else {
                        Err(anyhow!("extents rows need two entries"))
                    }
                })
                .collect::<Result<_>>()?;
            let spacing = r.f64("domain", "spacing", 0.125)?;
            let norm_kind = r.string("domain", "norm", "lp");
            let dim = extents.len();
            let norm = match norm_kind.as_str() {
                "lp" => {
                    let p = parse_f64(&r.string("domain", "p", "2"))?;
                    NormSpec::lp(dim, p)?
                }
                "weighted-lp" => {
                    let p = parse_f64(&r.string("domain", "p", "2"))?;
                    let w = parse_vec(&r.required("domain", "weights")?)?;
                    NormSpec::weighted_lp(dim, p, w)?
                }
                "ellipsoidal" => {
                    let rows = parse_rows(&r.required("domain", "matrix")?)?;
                    NormSpec::ellipsoidal(dim, rows.into_iter().flatten().collect())?
                }
                "polyhedral" => {
                    let rows = parse_rows(&r.required("domain", "generators")?)?;
                    NormSpec::polyhedral(dim, rows)?
                }
                other => bail!("unknown norm kind `{other}`"),
            };
            let density = r.f64("domain", "density", 1.0)?;
            let grid = GridDomain::new(norm, &extents, spacing)?
                .with_density(move |_| density)?;
            Domain::Grid(grid)
        }
        "graph" => {
            let p_model = r.f64("domain", "p_model", 2.0)?;
            let graph = if let Some(latt) = r.optional("domain", "lattice") {
                let dims = parse_vec(&latt)?;
                if dims.len() != 2 {
                    bail!("lattice takes `nx,ny`");
                }
                GraphDomain::lattice(dims[0] as usize, dims[1] as usize)?
            } else {
                let file = r.required("domain", "graph_file")?;
                load_graph_file(Path::new(&file))?
            };
            Domain::Graph(graph.with_p_model(p_model)?)
        }
        other => bail!("unknown domain kind `{other}`"),
    };

    // [task]
    let task = r.required("task", "name")?;
    if !TASKS.contains(&task.as_str()) {
        bail!("unknown task `{task}` (see `pharmlab list-tasks`)");
    }
    let expect = r.string("task", "expect", "pass");
    let expect_fail = match expect.as_str() {
        "pass" => false,
        "fail" => true,
        other => bail!("task.expect must be pass|fail, got `{other}`"),
    };
    let task_keys = TaskKeys {
        boundary: r.string("task", "boundary", "xy"),
        field: r.string("task", "g", "xy"),
        weight: r.string("task", "h", "one"),
        case: r.string("task", "case", "i"),
        map: r.string("task", "phi", "neg"),
        line_base: parse_vec(&r.string("task", "line_base", "0,0"))?,
        line_dir: parse_vec(&r.string("task", "line_dir", "1,0"))?,
        t_max: r.f64("task", "t_max", 1e9)?,
    };

    // [numeric]
    let p = r.f64("numeric", "p", 2.0)?;
    if !(p > 1.0) || !p.is_finite() {
        bail!("exponent out of range (1,inf): {p}");
    }
    let numeric = NumericConfig {
        p,
        seed: r.u64("numeric", "seed", 7)?,
        bumps: r.usize("numeric", "bumps", 32)?,
        samples: r.usize("numeric", "samples", 1000)?,
        eps_start: r.f64("numeric", "eps_start", 0.1)?,
        eps_ratio: r.f64("numeric", "eps_ratio", 0.25)?,
        eps_steps: r.usize("numeric", "eps_steps", 12)?,
        max_iterations: r.usize("numeric", "max_iterations", 4000)?,
        residual_tol: r.optional("numeric", "residual_tol").map(|s| parse_f64(&s)).transpose()?,
        delta_start: r.f64("numeric", "delta_start", 1e-2)?,
        delta_floor: r.f64("numeric", "delta_floor", 1e-8)?,
        p0: r.f64("numeric", "p0", 2.0)?,
        balls: r.usize("numeric", "balls", 16)?,
    };

    // [output]
    let directory = r.string("output", "directory", "out");
    let root = std::env::var("PHARMLAB_OUT").unwrap_or_else(|_| ".".to_string());
    r.record_output_root(&root);
    let out_dir = PathBuf::from(root).join(directory);

    let resolved = r.resolved.clone();
    raw.reject_unconsumed()?;
    Ok(ExperimentConfig { domain, task, expect_fail, task_keys, numeric, out_dir, resolved })
}

impl Resolver<'_> {
    fn record_output_root(&mut self, root: &str) {
        self.resolved.push(("output.root".into(), root.to_string()));
    }
}

/// Graph file: CSV lines `v,<id>,<measure>[,<in_omega>]` and
/// `e,<u>,<v>,<conductance>`.
fn load_graph_file(path: &Path) -> Result<GraphDomain> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading graph file {}", path.display()))?;
    let mut measures: Vec<(usize, f64, bool)> = Vec::new();
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        match parts.first() {
            Some(&"v") if parts.len() >= 3 => {
                let id: usize = parts[1].parse()?;
                let m: f64 = parts[2].parse()?;
                let in_omega = parts.get(3).map(|s| *s == "1").unwrap_or(true);
                measures.push((id, m, in_omega));
            }
            Some(&"e") if parts.len() == 4 => {
                edges.push((parts[1].parse()?, parts[2].parse()?, parts[3].parse()?));
            }
            _ => bail!("graph file line {}: unrecognized record", idx + 1),
        }
    }
    let n = measures.iter().map(|&(id, _, _)| id + 1).max().unwrap_or(0);
    let mut m = vec![0.0; n];
    let mut omega = vec![false; n];
    for (id, mv, o) in measures {
        m[id] = mv;
        omega[id] = o;
    }
    Ok(GraphDomain::new(n, &edges, m)?.with_omega(omega)?)
}
