//! Seeded batches of random graph problems with ordered comparison data.

use std::path::{Path, PathBuf};

use anyhow::Result;
use rand::Rng;
use sha2::{Digest, Sha256};

use dirichlet_core::chain::path_rng;
use dirichlet_core::fixed_point::LadderConfig;
use dirichlet_core::nonlinearity::NonlinearitySpec;
use dirichlet_core::random::{random_domain, random_form, random_function, random_measure, random_nest, RandomFormConfig};
use dirichlet_core::spec::{Backend, GraphPair, GraphSpec, ProblemSpec, SCHEMA_VERSION};

use crate::report::write_atomic;

/// Problem `k` of the batch for `seed`; independent of `count`.
pub fn random_spec(seed: u64, k: u64) -> ProblemSpec {
    let mut rng = path_rng(seed, k);
    let form = random_form(&mut rng, &RandomFormConfig::default());
    let n = form.n();
    let domain = random_domain(&mut rng, &form);
    let nest = random_nest(&mut rng, &domain, 3);
    let g = random_function(&mut rng, n, -1.0, 1.0);
    let mu = random_measure(&mut rng, &domain, -1.0, 1.0);
    let dg = random_function(&mut rng, n, 0.0, 0.5);
    let dmu = random_measure(&mut rng, &domain, 0.0, 0.5);
    let f = if rng.random_bool(0.5) {
        NonlinearitySpec::power(1.0, 3.0)
    } else {
        NonlinearitySpec {
            kind: "exp".into(),
            params: serde_json::json!({ "b": 1.0 }),
            source: None,
        }
    };
    let pair = GraphPair {
        g: g.iter().zip(dg.iter()).map(|(a, b)| a + b).collect(),
        mu: mu.iter().zip(dmu.iter()).map(|(a, b)| a + b).collect(),
    };
    ProblemSpec {
        schema_version: SCHEMA_VERSION,
        backend: Backend::Graph(GraphSpec {
            form: serde_json::from_str(&form.to_json()).expect("form json"),
            domain: domain.as_slice().to_vec(),
            g: g.0,
            mu: mu.0,
            f,
            nest: Some(nest.iter().map(|s| s.as_slice().to_vec()).collect()),
            ladder: LadderConfig::default(),
            pair: Some(pair),
        }),
    }
}

/// Writes `spec_000.json`.. into `dir`; returns each path with its SHA-256.
pub fn generate(dir: &Path, seed: u64, count: usize) -> Result<Vec<(PathBuf, String)>> {
    anyhow::ensure!(count >= 1, "count must be at least 1");
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let text = random_spec(seed, k as u64).to_json() + "\n";
        let name = format!("spec_{k:03}.json");
        write_atomic(dir, &name, text.as_bytes())?;
        let hash = Sha256::digest(text.as_bytes());
        let hex: String = hash.iter().map(|b| format!("{b:02x}")).collect();
        out.push((dir.join(name), hex));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dirichlet_core::nonlinearity::NonlinearityRegistry;

    #[test]
    fn generated_problems_are_transient_and_ordered() {
        for k in 0..5 {
            let spec = random_spec(42, k);
            let Backend::Graph(g) = &spec.backend else { unreachable!() };
            let p = g.build(&NonlinearityRegistry::default()).unwrap();
            assert!(p.form.is_transient(&p.domain));
            let q = g.build_pair(&p).unwrap().unwrap();
            assert!(p.g.iter().zip(q.g.iter()).all(|(a, b)| a <= b));
            assert!(p.mu.iter().zip(q.mu.iter()).all(|(a, b)| a <= b));
            assert_eq!(spec, ProblemSpec::from_json(&spec.to_json()).unwrap());
        }
    }
}
