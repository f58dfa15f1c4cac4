//! Backends by name: each turns a problem file into contracts and artifacts.

use std::collections::BTreeMap;

use anyhow::{anyhow, Result};

use crate::config::RunConfig;
use crate::frac::FracBackend;
use crate::graph::GraphBackend;
use crate::report::RunOutput;

pub trait Backend: Send + Sync {
    fn name(&self) -> &'static str;
    /// Suites this backend understands; others are reported as skipped.
    fn suites(&self) -> &'static [&'static str];
    fn run(&self, cfg: &RunConfig) -> Result<RunOutput>;
}

pub struct BackendRegistry {
    backends: BTreeMap<&'static str, Box<dyn Backend>>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut r = Self {
            backends: BTreeMap::new(),
        };
        r.register(Box::new(GraphBackend));
        r.register(Box::new(FracBackend));
        r
    }
}

impl BackendRegistry {
    pub fn register(&mut self, b: Box<dyn Backend>) {
        self.backends.insert(b.name(), b);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.backends.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Backend> {
        self.backends
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| anyhow!("unknown backend `{name}` (known: {})", self.names().join(", ")))
    }

    /// Runs the backend named by the problem file.
    pub fn run(&self, cfg: &RunConfig) -> Result<RunOutput> {
        let b = self.get(cfg.spec.backend_name())?;
        let mut out = b.run(cfg)?;
        for s in &cfg.suites {
            if !b.suites().contains(&s.as_str()) {
                out.skipped.push(s.clone());
            }
        }
        Ok(out)
    }
}
