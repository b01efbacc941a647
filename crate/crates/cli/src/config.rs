//! Run configuration: defaults, `key = value` files and flag overrides.
//!
//! Precedence is defaults < file < flags. Flags and file entries go
//! through the same parser, so both accept exactly the same values.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use porofeti::feti::{Execution, PcgOptions, Variant};
use porofeti::timeloop::SolverChoice;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, found `{text}`")]
    Syntax { line: usize, text: String },
    #[error("unknown key `{key}` (valid keys: {})", KEYS.join(", "))]
    UnknownKey { key: String },
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("invalid material parameters: {0}")]
    Model(String),
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub const KEYS: &[&str] =
    &["scenario", "mesh", "meshes", "fe-order", "nu", "E", "dt", "T", "solver", "tol", "max-iters", "out", "stride"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Manufactured,
    BarryMercer,
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::Manufactured => "mms",
            ScenarioKind::BarryMercer => "barry-mercer",
        })
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mms" => Ok(ScenarioKind::Manufactured),
            "barry-mercer" => Ok(ScenarioKind::BarryMercer),
            _ => Err("expected mms or barry-mercer".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverKind {
    FetiGeneralized,
    FetiSchur,
    Monolithic,
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::FetiGeneralized => "feti-generalized",
            SolverKind::FetiSchur => "feti-schur",
            SolverKind::Monolithic => "monolithic",
        })
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "feti-generalized" => Ok(SolverKind::FetiGeneralized),
            "feti-schur" => Ok(SolverKind::FetiSchur),
            "monolithic" => Ok(SolverKind::Monolithic),
            _ => Err("expected feti-generalized, feti-schur or monolithic".into()),
        }
    }
}

/// Fully resolved settings of one run. `None` means "scenario default".
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: ScenarioKind,
    /// Cells per unit length for `solve` and `barry-mercer`.
    pub mesh: usize,
    /// Mesh sequence of the convergence study.
    pub meshes: Vec<usize>,
    pub fe_order: usize,
    pub nu: Option<f64>,
    pub young: Option<f64>,
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub solver: SolverKind,
    pub tol: f64,
    pub max_iters: usize,
    pub out: PathBuf,
    /// Write every `stride`-th snapshot.
    pub stride: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioKind::Manufactured,
            mesh: 8,
            meshes: vec![8, 16, 24, 32],
            fe_order: 2,
            nu: None,
            young: None,
            dt: None,
            t_end: None,
            solver: SolverKind::FetiGeneralized,
            tol: 1e-8,
            max_iters: 500,
            out: PathBuf::from("out"),
            stride: 1,
        }
    }
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue { key: key.into(), value: value.into(), reason: reason.into() }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| invalid(key, value, e.to_string()))
}

fn positive_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
    let v: f64 = parse(key, value)?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, value, "must be positive"))
    }
}

fn positive_usize(key: &str, value: &str) -> Result<usize, ConfigError> {
    match parse::<usize>(key, value)? {
        0 => Err(invalid(key, value, "must be at least 1")),
        v => Ok(v),
    }
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        match key {
            "scenario" => self.scenario = parse(key, value)?,
            "mesh" => self.mesh = positive_usize(key, value)?,
            "meshes" => {
                let meshes = value.split(',').map(|m| positive_usize(key, m.trim())).collect::<Result<Vec<_>, _>>()?;
                if meshes.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(invalid(key, value, "must be strictly increasing"));
                }
                self.meshes = meshes;
            }
            "fe-order" => {
                self.fe_order = match parse::<usize>(key, value)? {
                    k @ (1 | 2) => k,
                    _ => return Err(invalid(key, value, "must be 1 or 2")),
                }
            }
            "nu" => {
                let nu: f64 = parse(key, value)?;
                if !(nu > 0.0 && nu < 0.5) {
                    return Err(invalid(key, value, "must lie in (0, 0.5)"));
                }
                self.nu = Some(nu);
            }
            "E" => self.young = Some(positive_f64(key, value)?),
            "dt" => self.dt = Some(positive_f64(key, value)?),
            "T" => self.t_end = Some(positive_f64(key, value)?),
            "solver" => self.solver = parse(key, value)?,
            "tol" => self.tol = positive_f64(key, value)?,
            "max-iters" => self.max_iters = positive_usize(key, value)?,
            "out" => {
                if value.is_empty() {
                    return Err(invalid(key, value, "must not be empty"));
                }
                self.out = PathBuf::from(value);
            }
            "stride" => self.stride = positive_usize(key, value)?,
            _ => return Err(ConfigError::UnknownKey { key: key.into() }),
        }
        Ok(())
    }

    /// Applies every entry of a `key = value` text on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: k + 1, text: line.into() })?;
            self.apply(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn parse_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.into(), source })?;
        self.apply_text(&text)
    }

    /// Defaults, then the file (if any), then the overrides in order.
    pub fn resolve<'a>(file: Option<&Path>, overrides: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            cfg.apply_file(path)?;
        }
        for (key, value) in overrides {
            cfg.apply(key, value)?;
        }
        Ok(cfg)
    }

    /// Text form accepted by [`RunConfig::parse_text`]; unset options are omitted.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario = {}", self.scenario);
        let _ = writeln!(s, "mesh = {}", self.mesh);
        let meshes: Vec<String> = self.meshes.iter().map(|m| m.to_string()).collect();
        let _ = writeln!(s, "meshes = {}", meshes.join(","));
        let _ = writeln!(s, "fe-order = {}", self.fe_order);
        let optional = [("nu", self.nu), ("E", self.young), ("dt", self.dt), ("T", self.t_end)];
        for (key, v) in optional {
            if let Some(v) = v {
                let _ = writeln!(s, "{key} = {v:?}");
            }
        }
        let _ = writeln!(s, "solver = {}", self.solver);
        let _ = writeln!(s, "tol = {:?}", self.tol);
        let _ = writeln!(s, "max-iters = {}", self.max_iters);
        let _ = writeln!(s, "out = {}", self.out.display());
        let _ = writeln!(s, "stride = {}", self.stride);
        s
    }

    pub fn solver_choice(&self) -> SolverChoice {
        let pcg = PcgOptions { tol: self.tol, max_iter: self.max_iters, ..PcgOptions::default() };
        let feti = |variant| SolverChoice::Feti { variant, execution: Execution::Concurrent, pcg };
        match self.solver {
            SolverKind::FetiGeneralized => feti(Variant::Generalized),
            SolverKind::FetiSchur => feti(Variant::Schur),
            SolverKind::Monolithic => SolverChoice::Monolithic,
        }
    }
}
