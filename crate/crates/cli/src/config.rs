//! INI-style run configuration.
//!
//! ```ini
//! [diffusion]
//! a = "1"
//! b = "-x^3"
//! # or: mu = "exp(-x^4/2)" with derive_drift = true
//!
//! [quadrature]
//! rel_tol = 1e-10
//!
//! [simulation]
//! paths = 10000
//!
//! [output]
//! json = "report.json"
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use kemeny_core::{DiffusionSpec, Expr, QuadConfig, SimConfig};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("[{section}] {key}: {msg}")]
    Value {
        section: String,
        key: String,
        msg: String,
    },
    #[error("{0}")]
    Invalid(String),
}

/// How the drift was specified.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftSource {
    Given,
    /// Derived so that `mu` is the invariant density.
    FromDensity(Expr),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputPaths {
    pub json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub spec: DiffusionSpec,
    pub drift: DriftSource,
    pub quad: QuadConfig,
    pub sim: SimConfig,
    pub output: OutputPaths,
}

type Section = BTreeMap<String, (usize, String)>;

fn parse_sections(text: &str) -> Result<BTreeMap<String, Section>, ConfigError> {
    let mut sections: BTreeMap<String, Section> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let syntax = |msg: String| ConfigError::Syntax { line: line_no, msg };
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| syntax("unterminated section header".into()))?
                .trim()
                .to_string();
            if sections.contains_key(&name) {
                return Err(syntax(format!("section [{name}] appears twice")));
            }
            sections.insert(name.clone(), Section::new());
            current = Some(name);
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| syntax("expected `key = value`".into()))?;
        let key = key.trim().to_string();
        let value = parse_value(value.trim()).map_err(syntax)?;
        let section = current
            .as_ref()
            .ok_or_else(|| syntax("key outside of any section".into()))?;
        let entries = sections.get_mut(section).expect("section was inserted");
        if entries.insert(key.clone(), (line_no, value)).is_some() {
            return Err(syntax(format!("duplicate key `{key}`")));
        }
    }
    Ok(sections)
}

/// A double-quoted string, or a bare token that ends at an inline comment.
fn parse_value(v: &str) -> Result<String, String> {
    if let Some(rest) = v.strip_prefix('"') {
        let end = rest.find('"').ok_or("unterminated string")?;
        let tail = rest[end + 1..].trim();
        if !(tail.is_empty() || tail.starts_with('#') || tail.starts_with(';')) {
            return Err(format!("unexpected text after string: `{tail}`"));
        }
        return Ok(rest[..end].to_string());
    }
    let bare = v.split([' ', '\t']).next().unwrap_or("");
    let tail = v[bare.len()..].trim();
    if !(tail.is_empty() || tail.starts_with('#') || tail.starts_with(';')) {
        return Err(format!("unquoted value with spaces: `{v}` (quote expressions)"));
    }
    Ok(bare.to_string())
}

struct Reader {
    name: String,
    entries: Section,
}

impl Reader {
    fn err(&self, key: &str, msg: impl Into<String>) -> ConfigError {
        ConfigError::Value {
            section: self.name.clone(),
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key).map(|(_, v)| v)
    }

    fn number<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(key, format!("`{v}` is not a valid number"))),
        }
    }

    fn flag(&mut self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.take(key).as_deref() {
            None => Ok(None),
            Some("true") => Ok(Some(true)),
            Some("false") => Ok(Some(false)),
            Some(v) => Err(self.err(key, format!("`{v}` is not true or false"))),
        }
    }

    fn expr(&mut self, key: &str) -> Result<Option<Expr>, ConfigError> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => Expr::parse(&v)
                .map(Some)
                .map_err(|e| self.err(key, format!("{e} in `{v}`"))),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().next() {
            None => Ok(()),
            Some((key, (line, _))) => Err(ConfigError::Syntax {
                line,
                msg: format!("unknown key `{key}` in [{}]", self.name),
            }),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        // Output paths are relative to the config file.
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.output.json, &mut cfg.output.csv].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut sections = parse_sections(text)?;
        let mut section = |name: &str| Reader {
            name: name.to_string(),
            entries: sections.remove(name).unwrap_or_default(),
        };

        let mut d = section("diffusion");
        let a = d.expr("a")?.unwrap_or(Expr::Num(1.0));
        let b = d.expr("b")?;
        let mu = d.expr("mu")?;
        let derive = d.flag("derive_drift")?;
        let (spec, drift) = match (b, mu) {
            (Some(b), None) => {
                if derive == Some(true) {
                    return Err(d.err("derive_drift", "needs `mu`, not `b`"));
                }
                (DiffusionSpec::new(a, b), DriftSource::Given)
            }
            (None, Some(mu)) => {
                if derive == Some(false) {
                    return Err(d.err("derive_drift", "`mu` without a drift needs derive_drift = true"));
                }
                let spec = DiffusionSpec::from_density(&mu, &a).map_err(|e| d.err("mu", e.to_string()))?;
                (spec, DriftSource::FromDensity(mu))
            }
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "[diffusion] takes exactly one of `b` and `mu`, not both".into(),
                ))
            }
            (None, None) => {
                return Err(ConfigError::Invalid(
                    "[diffusion] needs `b` (drift) or `mu` (invariant density)".into(),
                ))
            }
        };
        d.finish()?;

        let mut q = section("quadrature");
        let mut quad = QuadConfig::default();
        if let Some(t) = q.number("tol")? {
            quad.rel_tol = t;
            quad.abs_tol = t;
        }
        if let Some(t) = q.number("rel_tol")? {
            quad.rel_tol = t;
        }
        if let Some(t) = q.number("abs_tol")? {
            quad.abs_tol = t;
        }
        if let Some(n) = q.number("max_subdivisions")? {
            quad.max_subdivisions = n;
        }
        if let Some(r) = q.number("divergence_ratio")? {
            quad.divergence_ratio = r;
        }
        if let Some(list) = q.take("truncation_schedule") {
            quad.truncation_schedule = list
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| q.err("truncation_schedule", format!("`{list}` is not a list of numbers")))?;
        }
        q.finish()?;
        quad.validate()
            .map_err(|e| ConfigError::Invalid(format!("[quadrature] {e}")))?;

        let mut s = section("simulation");
        let mut sim = SimConfig::default();
        if let Some(v) = s.number("dt")? {
            sim.dt = v;
        }
        if let Some(v) = s.number("paths")? {
            sim.n_paths = v;
        }
        if let Some(v) = s.number("horizon")? {
            sim.horizon = v;
        }
        if let Some(v) = s.number("seed")? {
            sim.seed = v;
        }
        if let Some(v) = s.flag("antithetic")? {
            sim.antithetic = v;
        }
        s.finish()?;

        let mut o = section("output");
        let output = OutputPaths {
            json: o.take("json").map(PathBuf::from),
            csv: o.take("csv").map(PathBuf::from),
        };
        o.finish()?;

        if let Some(name) = sections.keys().next() {
            return Err(ConfigError::Invalid(format!("unknown section [{name}]")));
        }
        Ok(RunConfig {
            spec,
            drift,
            quad,
            sim,
            output,
        })
    }
}
