//! Monte Carlo oracle for the graph backend: the killed continuous-time jump
//! chain, simulated exactly, and path functionals whose means are `P_D g`,
//! `R^D h`, the Feynman-Kac residual and the exit second moment.
//!
//! Path `i` draws from ChaCha stream `i` of the run seed, so results do not
//! depend on the number of worker threads.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::{DiscreteForm, FunctionVector, NodeSet, SignedMeasure};
use crate::nonlinearity::{Nonlinearity, Site};
use crate::projection::poisson_kernel;
use crate::stats::{chi_square, ChiSquare, Estimate};

pub const STEP_CAP: u64 = 1_000_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Exit {
    /// Jumped to a state outside `D`.
    Jump(usize),
    /// Killed while in `D`.
    Death(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    pub states: Vec<usize>,
    pub holding: Vec<f64>,
    pub exit: Exit,
    /// Total time spent in each state before exit.
    pub occupation: Vec<f64>,
}

impl PathSample {
    pub fn exit_time(&self) -> f64 {
        self.holding.iter().sum()
    }
}

/// Per-state rates of the chain: jump `x -> y` at `2 J[x][y] / m[x]`, death
/// at `kappa[x] / m[x]`.
pub struct Chain<'a> {
    form: &'a DiscreteForm,
    inside: Vec<bool>,
    total: Vec<f64>,
    /// cumulative target probabilities; the last slot is death
    targets: Vec<Vec<(usize, f64)>>,
}

impl<'a> Chain<'a> {
    pub fn new(form: &'a DiscreteForm, domain: &NodeSet) -> Result<Self> {
        form.require_transient(domain)?;
        let n = form.n();
        let mut total = vec![0.0; n];
        let mut targets = vec![Vec::new(); n];
        for x in 0..n {
            let mx = form.m()[x];
            let mut acc = 0.0;
            let mut row = Vec::new();
            for y in 0..n {
                let j = form.jump()[(x, y)];
                if j > 0.0 && y != x {
                    acc += 2.0 * j / mx;
                    row.push((y, acc));
                }
            }
            acc += form.kappa()[x] / mx;
            total[x] = acc;
            for slot in row.iter_mut() {
                slot.1 /= acc;
            }
            targets[x] = row;
        }
        Ok(Self {
            form,
            inside: domain.mask(),
            total,
            targets,
        })
    }

    pub fn sample<R: Rng>(&self, x: usize, rng: &mut R) -> Result<PathSample> {
        if !self.inside[x] {
            return Err(Error::Precondition(format!("start state {x} is outside D")));
        }
        let n = self.form.n();
        let mut occupation = vec![0.0; n];
        let mut states = Vec::new();
        let mut holding = Vec::new();
        let mut cur = x;
        let mut steps = 0u64;
        loop {
            steps += 1;
            if steps > STEP_CAP {
                return Err(Error::RunawayPath(STEP_CAP));
            }
            let rate = self.total[cur];
            let u: f64 = 1.0 - rng.random::<f64>();
            let hold = -u.ln() / rate;
            states.push(cur);
            holding.push(hold);
            occupation[cur] += hold;
            let v: f64 = rng.random();
            let row = &self.targets[cur];
            let next = row.iter().find(|&&(_, c)| v < c).map(|&(y, _)| y);
            match next {
                None => {
                    return Ok(PathSample {
                        states,
                        holding,
                        exit: Exit::Death(cur),
                        occupation,
                    })
                }
                Some(y) if !self.inside[y] => {
                    return Ok(PathSample {
                        states,
                        holding,
                        exit: Exit::Jump(y),
                        occupation,
                    })
                }
                Some(y) => cur = y,
            }
        }
    }
}

pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

pub fn sample_path(form: &DiscreteForm, domain: &NodeSet, x: usize, seed: u64) -> Result<PathSample> {
    Chain::new(form, domain)?.sample(x, &mut path_rng(seed, 0))
}

/// A real functional of a path; its mean is the estimated quantity.
pub trait PathFunctional: Send + Sync {
    fn name(&self) -> &'static str;
    fn evaluate(&self, path: &PathSample) -> f64;
}

/// `g(X_{tau_D})`, zero after death.
pub struct ExitValue {
    pub g: FunctionVector,
}

impl PathFunctional for ExitValue {
    fn name(&self) -> &'static str {
        "PDg"
    }
    fn evaluate(&self, path: &PathSample) -> f64 {
        match path.exit {
            Exit::Jump(y) => self.g[y],
            Exit::Death(_) => 0.0,
        }
    }
}

/// `int_0^{tau_D} h(X_t) dt`.
pub struct Occupation {
    pub h: FunctionVector,
}

impl PathFunctional for Occupation {
    fn name(&self) -> &'static str {
        "RDh"
    }
    fn evaluate(&self, path: &PathSample) -> f64 {
        path.occupation.iter().zip(self.h.iter()).map(|(t, h)| t * h).sum()
    }
}

/// `(A^mu_{tau_D})^2` with `A^mu_t = int_0^t (mu / m)(X_s) ds`.
pub struct SquaredFunctional {
    pub density: FunctionVector,
}

impl PathFunctional for SquaredFunctional {
    fn name(&self) -> &'static str {
        "second-moment"
    }
    fn evaluate(&self, path: &PathSample) -> f64 {
        let a: f64 = path
            .occupation
            .iter()
            .zip(self.density.iter())
            .map(|(t, r)| t * r)
            .sum();
        a * a
    }
}

/// `u(x) - g(X_tau) - int f(X, u(X)) dt - A^mu_tau` with `x` the start state.
pub struct FeynmanKacResidual {
    pub u: FunctionVector,
    pub g: FunctionVector,
    /// `f(x, u(x)) + (mu / m)(x)` on `D`.
    pub source: FunctionVector,
}

impl FeynmanKacResidual {
    pub fn new(
        form: &DiscreteForm,
        domain: &NodeSet,
        u: &FunctionVector,
        g: &FunctionVector,
        mu: &SignedMeasure,
        f: &dyn Nonlinearity,
    ) -> Self {
        let mut source = vec![0.0; form.n()];
        for &x in domain.iter() {
            source[x] = f.eval(Site::State(x), u[x]) + mu[x] / form.m()[x];
        }
        Self {
            u: u.clone(),
            g: g.clone(),
            source: FunctionVector(source),
        }
    }
}

impl PathFunctional for FeynmanKacResidual {
    fn name(&self) -> &'static str {
        "FK-residual"
    }
    fn evaluate(&self, path: &PathSample) -> f64 {
        let start = path.states[0];
        let exit = match path.exit {
            Exit::Jump(y) => self.g[y],
            Exit::Death(_) => 0.0,
        };
        let integral: f64 = path
            .occupation
            .iter()
            .zip(self.source.iter())
            .map(|(t, s)| t * s)
            .sum();
        self.u[start] - exit - integral
    }
}

/// Inputs from which an estimator kind is built.
#[derive(Clone, Default)]
pub struct EstimatorData<'a> {
    pub g: Option<&'a FunctionVector>,
    pub h: Option<&'a FunctionVector>,
    pub mu: Option<&'a SignedMeasure>,
    pub u: Option<&'a FunctionVector>,
    pub f: Option<&'a dyn Nonlinearity>,
}

type EstimatorBuilder =
    fn(&DiscreteForm, &NodeSet, &EstimatorData<'_>) -> Result<Box<dyn PathFunctional>>;

fn missing(name: &str) -> Error {
    Error::Invalid(format!("estimator input `{name}` missing"))
}

/// Estimator kinds by name.
pub struct EstimatorRegistry {
    builders: BTreeMap<&'static str, EstimatorBuilder>,
}

impl Default for EstimatorRegistry {
    fn default() -> Self {
        let mut builders: BTreeMap<&'static str, EstimatorBuilder> = BTreeMap::new();
        builders.insert("PDg", |_, _, d| {
            Ok(Box::new(ExitValue {
                g: d.g.ok_or_else(|| missing("g"))?.clone(),
            }))
        });
        builders.insert("RDh", |_, _, d| {
            Ok(Box::new(Occupation {
                h: d.h.ok_or_else(|| missing("h"))?.clone(),
            }))
        });
        builders.insert("second-moment", |form, _, d| {
            let mu = d.mu.ok_or_else(|| missing("mu"))?;
            if !mu.is_nonnegative() {
                return Err(Error::Precondition("second moment needs mu >= 0".into()));
            }
            Ok(Box::new(SquaredFunctional {
                density: mu.density(form.m()),
            }))
        });
        builders.insert("FK-residual", |form, domain, d| {
            let zero = SignedMeasure::zeros(form.n());
            Ok(Box::new(FeynmanKacResidual::new(
                form,
                domain,
                d.u.ok_or_else(|| missing("u"))?,
                d.g.ok_or_else(|| missing("g"))?,
                d.mu.unwrap_or(&zero),
                d.f.ok_or_else(|| missing("f"))?,
            )))
        });
        Self { builders }
    }
}

impl EstimatorRegistry {
    pub fn register(&mut self, name: &'static str, builder: EstimatorBuilder) {
        self.builders.insert(name, builder);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.builders.keys().copied().collect()
    }

    pub fn build(
        &self,
        kind: &str,
        form: &DiscreteForm,
        domain: &NodeSet,
        data: &EstimatorData<'_>,
    ) -> Result<Box<dyn PathFunctional>> {
        let b = self.builders.get(kind).ok_or_else(|| Error::Unknown {
            kind: "estimator",
            name: kind.to_string(),
        })?;
        b(form, domain, data)
    }
}

/// Mean of `functional` over `n_paths` chains started at `x`.
pub fn estimate(
    chain: &Chain<'_>,
    functional: &dyn PathFunctional,
    x: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Estimate> {
    if n_paths < 100 {
        return Err(Error::Precondition("at least 100 paths are required".into()));
    }
    let samples: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            chain
                .sample(x, &mut path_rng(seed, i))
                .map(|p| functional.evaluate(&p))
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&samples))
}

pub fn mc_estimate(
    kind: &str,
    form: &DiscreteForm,
    domain: &NodeSet,
    data: &EstimatorData<'_>,
    x: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Estimate> {
    let functional = EstimatorRegistry::default().build(kind, form, domain, data)?;
    let chain = Chain::new(form, domain)?;
    estimate(&chain, functional.as_ref(), x, n_paths, seed)
}

/// Mean occupation vector with componentwise standard errors.
pub fn occupation_estimate(
    form: &DiscreteForm,
    domain: &NodeSet,
    x: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    let chain = Chain::new(form, domain)?;
    let paths: Vec<Vec<f64>> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| chain.sample(x, &mut path_rng(seed, i)).map(|p| p.occupation))
        .collect::<Result<_>>()?;
    Ok((0..form.n())
        .map(|y| {
            let col: Vec<f64> = paths.iter().map(|p| p[y]).collect();
            Estimate::from_samples(&col)
        })
        .collect())
}

/// Exit states (and death) from `x` against the Poisson kernel row.
pub fn exit_law_test(
    form: &DiscreteForm,
    domain: &NodeSet,
    x: usize,
    n_paths: usize,
    seed: u64,
) -> Result<ChiSquare> {
    let chain = Chain::new(form, domain)?;
    let kernel = poisson_kernel(form, domain)?;
    let n = form.n();
    let exits: Vec<Exit> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| chain.sample(x, &mut path_rng(seed, i)).map(|p| p.exit))
        .collect::<Result<_>>()?;
    // cells: states of D^c, then death
    let mut counts = vec![0u64; n + 1];
    for e in exits {
        match e {
            Exit::Jump(y) => counts[y] += 1,
            Exit::Death(_) => counts[n] += 1,
        }
    }
    let mut probs = kernel.row(x);
    probs.push(kernel.row_defect(x).max(0.0));
    let keep: Vec<usize> = (0..=n).filter(|&c| probs[c] > 0.0 || counts[c] > 0).collect();
    let counts: Vec<u64> = keep.iter().map(|&c| counts[c]).collect();
    let probs: Vec<f64> = keep.iter().map(|&c| probs[c]).collect();
    chi_square(&counts, &probs)
}
