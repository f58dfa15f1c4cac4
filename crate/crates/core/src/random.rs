//! Seeded random forms, domains and data for the randomized suites.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::form::{DiscreteForm, FunctionVector, NodeSet, SignedMeasure};

#[derive(Clone, Debug)]
pub struct RandomFormConfig {
    pub min_states: usize,
    pub max_states: usize,
    /// Probability of an extra edge beyond the spanning tree.
    pub edge_prob: f64,
    /// Probability that a state is killed; 0 gives a killing-free form.
    pub kill_prob: f64,
}

impl Default for RandomFormConfig {
    fn default() -> Self {
        Self {
            min_states: 5,
            max_states: 50,
            edge_prob: 0.15,
            kill_prob: 0.2,
        }
    }
}

/// A connected random form: spanning tree plus random extra edges.
pub fn random_form<R: Rng>(rng: &mut R, cfg: &RandomFormConfig) -> DiscreteForm {
    let n = rng.random_range(cfg.min_states..=cfg.max_states);
    let m: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
    let mut j = DMatrix::zeros(n, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    for k in 1..n {
        let a = order[k];
        let b = order[rng.random_range(0..k)];
        let w = rng.random_range(0.1..1.0);
        j[(a, b)] = w;
        j[(b, a)] = w;
    }
    for a in 0..n {
        for b in a + 1..n {
            if j[(a, b)] == 0.0 && rng.random_bool(cfg.edge_prob) {
                let w = rng.random_range(0.05..1.0);
                j[(a, b)] = w;
                j[(b, a)] = w;
            }
        }
    }
    let kappa: Vec<f64> = (0..n)
        .map(|_| {
            if cfg.kill_prob > 0.0 && rng.random_bool(cfg.kill_prob) {
                rng.random_range(0.05..1.0)
            } else {
                0.0
            }
        })
        .collect();
    DiscreteForm::new(m, j, kappa).expect("random form is valid")
}

/// A nonempty transient domain; proper unless the form kills somewhere.
pub fn random_domain<R: Rng>(rng: &mut R, form: &DiscreteForm) -> NodeSet {
    let n = form.n();
    loop {
        let size = rng.random_range(1..=n);
        let mut all: Vec<usize> = (0..n).collect();
        all.shuffle(rng);
        let set = NodeSet::new(n, all[..size].iter().copied()).expect("valid subset");
        if form.is_transient(&set) {
            return set;
        }
    }
}

/// A nonempty subset of `of` (or `of` itself when it has one element).
pub fn random_subset<R: Rng>(rng: &mut R, of: &NodeSet) -> NodeSet {
    let mut members = of.as_slice().to_vec();
    members.shuffle(rng);
    let size = rng.random_range(1..=members.len().max(1));
    NodeSet::new(of.universe(), members.into_iter().take(size)).expect("valid subset")
}

/// An increasing chain of `levels` subsets ending at `of`.
pub fn random_nest<R: Rng>(rng: &mut R, of: &NodeSet, levels: usize) -> Vec<NodeSet> {
    let mut members = of.as_slice().to_vec();
    members.shuffle(rng);
    let k = members.len();
    let mut cuts: Vec<usize> = (0..levels.saturating_sub(1))
        .map(|_| rng.random_range(1..=k))
        .collect();
    cuts.sort_unstable();
    cuts.push(k);
    cuts.dedup();
    cuts.into_iter()
        .map(|c| NodeSet::new(of.universe(), members[..c].iter().copied()).expect("valid subset"))
        .collect()
}

pub fn random_function<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> FunctionVector {
    FunctionVector((0..n).map(|_| rng.random_range(lo..hi)).collect())
}

/// Atoms on a random part of `support`, with values in `[lo, hi)`.
pub fn random_measure<R: Rng>(rng: &mut R, support: &NodeSet, lo: f64, hi: f64) -> SignedMeasure {
    let mut w = vec![0.0; support.universe()];
    for &x in support.iter() {
        if rng.random_bool(0.6) {
            w[x] = rng.random_range(lo..hi);
        }
    }
    SignedMeasure(w)
}
