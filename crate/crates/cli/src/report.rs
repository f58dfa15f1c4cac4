//! Named contracts, artifacts and their atomic, schema-versioned output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use dirichlet_core::spec::SCHEMA_VERSION;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bound {
    /// Pass iff `value <= tol`.
    AtMost,
    /// Pass iff `value >= tol`.
    AtLeast,
}

#[derive(Clone, Debug, Serialize)]
pub struct Contract {
    pub name: String,
    pub suite: String,
    pub value: f64,
    pub bound: Bound,
    pub tol: f64,
    pub pass: bool,
}

/// Contracts of one suite; tolerances may be overridden by name.
#[derive(Debug, Default)]
pub struct Contracts {
    suite: String,
    overrides: BTreeMap<String, f64>,
    pub items: Vec<Contract>,
}

impl Contracts {
    pub fn new(suite: &str, overrides: &BTreeMap<String, f64>) -> Self {
        Self {
            suite: suite.into(),
            overrides: overrides.clone(),
            items: Vec::new(),
        }
    }

    fn push(&mut self, name: &str, value: f64, bound: Bound, tol: f64) {
        let name = format!("{}.{name}", self.suite);
        let tol = self.overrides.get(&name).copied().unwrap_or(tol);
        // NaN fails both bounds
        let pass = match bound {
            Bound::AtMost => value <= tol,
            Bound::AtLeast => value >= tol,
        };
        self.items.push(Contract {
            name,
            suite: self.suite.clone(),
            value,
            bound,
            tol,
            pass,
        });
    }

    pub fn at_most(&mut self, name: &str, value: f64, tol: f64) {
        self.push(name, value, Bound::AtMost, tol);
    }

    pub fn at_least(&mut self, name: &str, value: f64, tol: f64) {
        self.push(name, value, Bound::AtLeast, tol);
    }

    /// A failed computation counts as a failed contract.
    pub fn error(&mut self, name: &str, err: &dyn std::fmt::Display) {
        self.push(name, f64::NAN, Bound::AtMost, 0.0);
        if let Some(c) = self.items.last_mut() {
            c.name = format!("{} ({err})", c.name);
        }
    }
}

/// Everything a backend run produces.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub contracts: Vec<Contract>,
    pub solution_csv: String,
    pub trace_csv: String,
    pub mc: Vec<Value>,
    pub diagnostics: BTreeMap<String, Value>,
    pub skipped: Vec<String>,
}

impl RunOutput {
    pub fn all_pass(&self) -> bool {
        self.contracts.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Contract> {
        self.contracts.iter().filter(|c| !c.pass).collect()
    }
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let target = dir.join(name);
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, &target).with_context(|| format!("renaming into {}", target.display()))?;
    Ok(())
}

fn csv_with_header(body: &str) -> String {
    format!("# schema_version: {SCHEMA_VERSION}\n{body}")
}

pub fn write_outputs(dir: &Path, backend: &str, seed: u64, out: &RunOutput) -> Result<()> {
    let residuals = json!({
        "schema_version": SCHEMA_VERSION,
        "backend": backend,
        "seed": seed,
        "all_pass": out.all_pass(),
        "contracts": out.contracts,
        "skipped": out.skipped,
        "diagnostics": out.diagnostics,
    });
    let mc = json!({
        "schema_version": SCHEMA_VERSION,
        "backend": backend,
        "seed": seed,
        "results": out.mc,
    });
    write_atomic(dir, "solution.csv", csv_with_header(&out.solution_csv).as_bytes())?;
    write_atomic(dir, "trace.csv", csv_with_header(&out.trace_csv).as_bytes())?;
    write_atomic(dir, "residuals.json", serde_json::to_string_pretty(&residuals)?.as_bytes())?;
    write_atomic(dir, "mc.json", serde_json::to_string_pretty(&mc)?.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contracts_and_overrides() {
        let mut tol = BTreeMap::new();
        tol.insert("verify.b".to_string(), 1.0);
        let mut c = Contracts::new("verify", &tol);
        c.at_most("a", 1e-9, 1e-8);
        c.at_most("b", 0.5, 1e-8);
        c.at_least("c", -1.0, 0.0);
        c.at_most("d", f64::NAN, 1.0);
        let pass: Vec<bool> = c.items.iter().map(|x| x.pass).collect();
        assert_eq!(pass, vec![true, true, false, false]);
        assert_eq!(c.items[1].tol, 1.0);
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = std::env::temp_dir().join(format!("dl-report-{}", std::process::id()));
        write_atomic(&dir, "x.txt", b"one").unwrap();
        write_atomic(&dir, "x.txt", b"two").unwrap();
        assert_eq!(fs::read_to_string(dir.join("x.txt")).unwrap(), "two");
        let leftovers = fs::read_dir(&dir).unwrap().count();
        assert_eq!(leftovers, 1);
        fs::remove_dir_all(dir).unwrap();
    }
}
