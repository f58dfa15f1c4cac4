//! Run configuration: the problem, which suites to run, seeds and tolerance
//! overrides. Command-line flags take precedence over the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use dirichlet_core::spec::{ProblemSpec, SCHEMA_VERSION};

pub const ALL_SUITES: [&str; 5] = ["verify", "trace", "mc", "wos", "estimates"];

/// Problem given inline or as a path relative to the config file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SpecSource {
    Path(PathBuf),
    Inline(Box<ProblemSpec>),
}

/// A deliberate perturbation of the computed solution, for checking that
/// the verification suites reject non-solutions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub eps: f64,
    /// State to perturb (graph backend); the continuum backend shifts `u`
    /// on all of `D`.
    #[serde(default)]
    pub state: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    #[serde(default = "version")]
    pub schema_version: u32,
    pub spec: SpecSource,
    #[serde(default)]
    pub suites: Vec<String>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub paths: Option<usize>,
    #[serde(default)]
    pub tol: BTreeMap<String, f64>,
    #[serde(default)]
    pub inject: Option<Injection>,
}

fn version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub spec: ProblemSpec,
    pub suites: Vec<String>,
    pub out: PathBuf,
    pub seed: u64,
    /// Monte Carlo paths per estimate.
    pub paths: usize,
    pub tol: BTreeMap<String, f64>,
    pub inject: Option<Injection>,
}

/// Overrides from the command line.
#[derive(Clone, Debug, Default)]
pub struct Flags {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub suites: Vec<String>,
    pub tol: Vec<String>,
}

pub fn parse_tol(s: &str) -> Result<(String, f64)> {
    let Some((k, v)) = s.split_once('=') else {
        bail!("tolerance override `{s}` is not KEY=VAL");
    };
    let v: f64 = v.trim().parse().with_context(|| format!("tolerance `{s}`"))?;
    if !(v.is_finite()) {
        bail!("tolerance `{s}` must be finite");
    }
    Ok((k.trim().to_string(), v))
}

impl RunConfig {
    pub fn load(path: &Path, flags: &Flags) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: RunFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if file.schema_version != SCHEMA_VERSION {
            bail!("config schema version {} is not supported", file.schema_version);
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let spec = match file.spec {
            SpecSource::Inline(s) => *s,
            SpecSource::Path(p) => {
                let p = base.join(p);
                let t = fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                ProblemSpec::from_json(&t).with_context(|| format!("parsing {}", p.display()))?
            }
        };
        let mut tol = file.tol;
        for t in &flags.tol {
            let (k, v) = parse_tol(t)?;
            tol.insert(k, v);
        }
        let suites = if !flags.suites.is_empty() {
            flags.suites.clone()
        } else if !file.suites.is_empty() {
            file.suites
        } else {
            ALL_SUITES.iter().map(|s| s.to_string()).collect()
        };
        let out = flags
            .out
            .clone()
            .or_else(|| file.out.map(|o| base.join(o)))
            .unwrap_or_else(|| PathBuf::from("out"));
        let cfg = Self {
            spec,
            suites,
            out,
            seed: flags.seed.or(file.seed).unwrap_or(1),
            paths: file.paths.unwrap_or(100_000),
            tol,
            inject: file.inject,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.suites {
            if !ALL_SUITES.contains(&s.as_str()) {
                bail!("unknown suite `{s}` (known: {})", ALL_SUITES.join(", "));
            }
        }
        for (k, v) in &self.tol {
            if !(*v > 0.0) && !k.ends_with("slack") {
                bail!("tolerance `{k}` must be positive");
            }
        }
        if self.paths < 100 {
            bail!("at least 100 Monte Carlo paths are required");
        }
        Ok(())
    }

    pub fn wants(&self, suite: &str) -> bool {
        self.suites.iter().any(|s| s == suite)
    }
}
