//! `dirichlet-lab`: runs a problem file through a backend and its
//! verification suites, and writes the results as CSV/JSON.

pub mod backend;
pub mod config;
pub mod frac;
pub mod gen;
pub mod graph;
pub mod report;

use anyhow::Result;

use backend::BackendRegistry;
use config::RunConfig;
use report::{write_outputs, RunOutput};

/// Runs `cfg` and writes the four artifacts into `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunOutput> {
    let out = BackendRegistry::default().run(cfg)?;
    write_outputs(&cfg.out, cfg.spec.backend_name(), cfg.seed, &out)?;
    Ok(out)
}

/// Caps the global rayon pool at `DIRICHLET_LAB_THREADS` when set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("DIRICHLET_LAB_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("DIRICHLET_LAB_THREADS must be a positive integer, got `{v}`"))?;
        anyhow::ensure!(n >= 1, "DIRICHLET_LAB_THREADS must be at least 1");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}
