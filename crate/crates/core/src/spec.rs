//! The problem file shared by both backends.
//!
//! ```json
//! {"backend": "graph", "form": {"m": [..], "J": [[..]], "kappa": [..]},
//!  "D": [1, 2], "g": [..], "mu": [..], "f": {"kind": "power", "params": {"b": 1, "p": 3}}}
//! {"backend": "frac1d", "alpha": 1.0, "g": {"kind": "constant", "value": 1},
//!  "atoms": [[0.2, 1.0]], "martin": [0, 1], "f": {"kind": "zero"}}
//! ```

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fixed_point::LadderConfig;
use crate::form::{DiscreteForm, FunctionVector, NodeSet, SignedMeasure};
use crate::frac1d::{ContinuumProblem, ExteriorData, GridConfig};
use crate::nonlinearity::{NonlinearityRegistry, NonlinearitySpec};
use crate::semilinear::GraphProblem;

pub const SCHEMA_VERSION: u32 = 1;

fn schema_version() -> u32 {
    SCHEMA_VERSION
}

fn zero_f() -> NonlinearitySpec {
    NonlinearitySpec::zero()
}

/// Second data set `(g2, mu2)` on the same form and domain, for comparison
/// runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphPair {
    pub g: Vec<f64>,
    pub mu: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub form: Value,
    #[serde(rename = "D")]
    pub domain: Vec<usize>,
    #[serde(default)]
    pub g: Vec<f64>,
    #[serde(default)]
    pub mu: Vec<f64>,
    #[serde(default = "zero_f")]
    pub f: NonlinearitySpec,
    /// Increasing subsets ending at `D`; defaults to `[D]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nest: Option<Vec<Vec<usize>>>,
    #[serde(default)]
    pub ladder: LadderConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair: Option<GraphPair>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FracSpec {
    pub alpha: f64,
    #[serde(default = "exterior_zero")]
    pub g: ExteriorData,
    /// `(z, m)` atoms of `mu` inside `D`.
    #[serde(default)]
    pub atoms: Vec<(f64, f64)>,
    /// Martin masses at `-1` and `+1`.
    #[serde(default)]
    pub martin: [f64; 2],
    #[serde(default = "zero_f")]
    pub f: NonlinearitySpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub ladder: LadderConfig,
}

fn exterior_zero() -> ExteriorData {
    ExteriorData::Zero
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "lowercase")]
pub enum Backend {
    Graph(GraphSpec),
    Frac1d(FracSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    #[serde(flatten)]
    pub backend: Backend,
}

impl ProblemSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ProblemSpec = serde_json::from_str(text)?;
        if spec.schema_version != SCHEMA_VERSION {
            return Err(Error::Invalid(format!(
                "problem schema version {} is not supported (expected {SCHEMA_VERSION})",
                spec.schema_version
            )));
        }
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem specs serialise")
    }

    pub fn backend_name(&self) -> &'static str {
        match self.backend {
            Backend::Graph(_) => "graph",
            Backend::Frac1d(_) => "frac1d",
        }
    }
}

fn vector_or_zeros(v: &[f64], n: usize) -> Vec<f64> {
    if v.is_empty() {
        vec![0.0; n]
    } else {
        v.to_vec()
    }
}

impl GraphSpec {
    pub fn build(&self, registry: &NonlinearityRegistry) -> Result<GraphProblem> {
        let form = DiscreteForm::from_json(&self.form.to_string())?;
        let n = form.n();
        let domain = NodeSet::new(n, self.domain.iter().copied())?;
        let f = registry.build(&self.f)?;
        for c in self.f.coefficients() {
            c.validate_for_states(n)?;
        }
        let mut p = GraphProblem::new(
            form,
            domain,
            FunctionVector(vector_or_zeros(&self.g, n)),
            SignedMeasure(vector_or_zeros(&self.mu, n)),
            f,
        )?
        .with_ladder(self.ladder.clone());
        if let Some(nest) = &self.nest {
            let sets = nest
                .iter()
                .map(|s| NodeSet::new(n, s.iter().copied()))
                .collect::<Result<Vec<_>>>()?;
            p = p.with_nest(sets)?;
        }
        Ok(p)
    }

    /// The comparison partner: same form, domain and `f`, data from `pair`.
    pub fn build_pair(&self, first: &GraphProblem) -> Result<Option<GraphProblem>> {
        let Some(pair) = &self.pair else {
            return Ok(None);
        };
        let n = first.n();
        let mut p = first.clone();
        p.g = FunctionVector(vector_or_zeros(&pair.g, n));
        p.mu = SignedMeasure(vector_or_zeros(&pair.mu, n));
        p.g.check_len(n)?;
        p.mu.check_len(n)?;
        Ok(Some(p))
    }
}

impl FracSpec {
    pub fn build(&self, registry: &NonlinearityRegistry) -> Result<ContinuumProblem> {
        let f = registry.build(&self.f)?;
        for c in self.f.coefficients() {
            c.validate_for_points()?;
        }
        let mut p = ContinuumProblem::new(self.alpha, self.g.clone(), f)?
            .with_grid(self.grid.clone())
            .with_ladder(self.ladder.clone());
        if !self.atoms.is_empty() {
            p = p.with_atoms(self.atoms.clone())?;
        }
        if self.martin != [0.0, 0.0] {
            p = p.with_martin(self.martin[0], self.martin[1])?;
        }
        Ok(p)
    }
}
