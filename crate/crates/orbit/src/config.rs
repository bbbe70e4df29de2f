//! Experiment configuration files and group specifications.

use std::fs;
use std::path::{Path, PathBuf};

use orbit_core::groups;
use orbit_core::GroupAction;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::{self, GroupRecord};

/// A group given by constructor expression (`cyclic(6)`,
/// `product(rotations(3),symmetric(3))`) or by explicit elements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GroupSpec {
    Expr(String),
    Elements(GroupRecord),
}

impl GroupSpec {
    pub fn build(&self) -> Result<GroupAction> {
        match self {
            GroupSpec::Expr(s) if s.ends_with(".json") => io::read_group_json(Path::new(s)),
            GroupSpec::Expr(s) => parse_group(s),
            GroupSpec::Elements(r) => r.to_group(),
        }
    }

    pub fn label(&self) -> String {
        match self {
            GroupSpec::Expr(s) => s.clone(),
            GroupSpec::Elements(r) => r.name.clone(),
        }
    }
}

/// One noise level or several.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Sigmas {
    One(f64),
    Many(Vec<f64>),
}

impl Sigmas {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Sigmas::One(s) => vec![*s],
            Sigmas::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub dir: Option<PathBuf>,
    pub gnuplot: Option<bool>,
    /// `csv` or `bin` for generated datasets.
    pub format: Option<String>,
}

/// Settings shared by all subcommands; command-line flags take precedence.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub group: Option<GroupSpec>,
    pub theta_star: Option<Vec<f64>>,
    pub sigma: Option<Sigmas>,
    pub n: Option<usize>,
    pub seed: Option<u64>,
    pub method: Option<String>,
    pub methods: Option<Vec<String>>,
    pub iters: Option<usize>,
    pub eta: Option<f64>,
    pub starts: Option<usize>,
    pub outputs: Option<Outputs>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(s) = &self.sigma {
            if s.values().iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(CliError::Config("sigma must be positive".into()));
            }
        }
        if self.n == Some(0) {
            return Err(CliError::Config("n must be at least 1".into()));
        }
        if self.iters == Some(0) {
            return Err(CliError::Config("iters must be at least 1".into()));
        }
        if self.starts == Some(0) {
            return Err(CliError::Config("starts must be at least 1".into()));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(CliError::Config("eta must be positive".into()));
            }
        }
        if let Some(t) = &self.theta_star {
            if t.iter().any(|x| !x.is_finite()) {
                return Err(CliError::Config("theta_star must be finite".into()));
            }
        }
        if let Some(f) = self.outputs.as_ref().and_then(|o| o.format.as_deref()) {
            if f != "csv" && f != "bin" {
                return Err(CliError::Config(format!("unknown output format '{f}'")));
            }
        }
        Ok(())
    }
}

/// Parses a constructor expression.
pub fn parse_group(spec: &str) -> Result<GroupAction> {
    let s = spec.trim();
    let bad = || CliError::Config(format!("unrecognized group '{spec}'"));
    let open = s.find('(').ok_or_else(bad)?;
    let inner = s[open + 1..].strip_suffix(')').ok_or_else(bad)?;
    let name = s[..open].trim();
    if name == "product" {
        let (a, b) = split_top_level(inner).ok_or_else(bad)?;
        return Ok(groups::product(&parse_group(a)?, &parse_group(b)?)?);
    }
    let k: usize = inner.trim().parse().map_err(|_| bad())?;
    Ok(match name {
        "rotations" => groups::rotations(k)?,
        "cyclic" => groups::cyclic(k)?,
        "symmetric" => groups::symmetric(k)?,
        "trivial" => groups::trivial(k)?,
        _ => return Err(bad()),
    })
}

fn split_top_level(s: &str) -> Option<(&str, &str)> {
    let mut depth = 0i32;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => return Some((&s[..i], &s[i + 1..])),
            _ => {}
        }
    }
    None
}

/// Parses `a,b,c` into floats.
pub fn parse_vector(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            let v: f64 = x
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("cannot parse '{}' as a number", x.trim())))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(CliError::Config(format!("non-finite value '{}'", x.trim())))
            }
        })
        .collect()
}
