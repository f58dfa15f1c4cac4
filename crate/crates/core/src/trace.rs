//! The killing part `kappa_D` of the restricted form and the boundary trace
//! sequence `w_n = P_{V_n}(|u| R^D kappa_D)` along a nest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::form::{DiscreteForm, FunctionVector, NodeSet};
use crate::projection::{poisson_kernel, SubsetSolver};
use crate::stats::{aitken, richardson};

/// `kappa_D(x) = sum_{y in D^c} 2 J[x][y] + kappa[x]` on `D`, as atoms.
pub fn killing_part(form: &DiscreteForm, domain: &NodeSet) -> FunctionVector {
    let n = form.n();
    let inside = domain.mask();
    let mut out = vec![0.0; n];
    for &x in domain.iter() {
        let outward: f64 = (0..n)
            .filter(|&y| !inside[y])
            .map(|y| 2.0 * form.jump()[(x, y)])
            .sum();
        out[x] = outward + form.kappa()[x];
    }
    FunctionVector(out)
}

/// `max_D |R^D kappa_D - 1|`: the chain leaves `D` by an exterior jump or by
/// death with probability one.
pub fn killing_normalization_defect(form: &DiscreteForm, domain: &NodeSet) -> Result<f64> {
    let solver = SubsetSolver::new(form, domain)?;
    let r = solver.solve_extended(&killing_part(form, domain));
    Ok(domain.iter().fold(0.0f64, |a, &x| a.max((r[x] - 1.0).abs())))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceSequence {
    pub probes: Vec<String>,
    pub levels: Vec<usize>,
    /// `values[p][k]`: probe `p` at nest level `levels[k]`.
    pub values: Vec<Vec<f64>>,
    /// Extrapolated limit per probe, see [`Tail`].
    pub limit: Vec<f64>,
}

/// How the limit of `w_n` is read off the last levels.
#[derive(Clone, Debug, PartialEq)]
pub enum Tail {
    /// The nest reaches `D`: the last value is the limit.
    Exact,
    /// Aitken's delta-squared on the last three levels; used when the rate
    /// is not known.
    Aitken,
    /// Richardson with known powers of `2^{-n}`.
    Richardson(Vec<f64>),
}

impl TraceSequence {
    pub fn from_values(
        probes: Vec<String>,
        levels: Vec<usize>,
        values: Vec<Vec<f64>>,
        tail: Tail,
    ) -> Self {
        let limit = values
            .iter()
            .map(|v| {
                match &tail {
                    Tail::Exact => v.last().copied(),
                    Tail::Aitken => aitken(v),
                    Tail::Richardson(p) => richardson(v, p),
                }
                .unwrap_or(0.0)
            })
            .collect();
        Self {
            probes,
            levels,
            values,
            limit,
        }
    }

    pub fn max_abs_limit(&self) -> f64 {
        self.limit.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// `probe,n,w_n,extrapolated` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("probe,n,w_n,extrapolated\n");
        for (p, probe) in self.probes.iter().enumerate() {
            for (k, level) in self.levels.iter().enumerate() {
                out.push_str(&format!(
                    "{probe},{level},{:.17e},{:.17e}\n",
                    self.values[p][k], self.limit[p]
                ));
            }
        }
        out
    }
}

/// Trace values at every state of `D` along `nest`.
pub fn trace_sequence(
    form: &DiscreteForm,
    domain: &NodeSet,
    nest: &[NodeSet],
    u: &FunctionVector,
) -> Result<TraceSequence> {
    if nest.is_empty() {
        return Err(Error::Invalid("trace sequence needs a nonempty nest".into()));
    }
    u.check_len(form.n())?;
    let solver = SubsetSolver::new(form, domain)?;
    let r = solver.solve_extended(&killing_part(form, domain));
    let integrand: Vec<f64> = (0..form.n())
        .map(|x| if domain.contains(x) { u[x].abs() * r[x] } else { 0.0 })
        .collect();
    let probes: Vec<usize> = domain.iter().copied().collect();
    let mut values = vec![Vec::with_capacity(nest.len()); probes.len()];
    for level in nest {
        if !level.is_subset(domain) {
            return Err(Error::Precondition("nest levels must lie inside D".into()));
        }
        let w = poisson_kernel(form, level)?.apply(&integrand);
        for (p, &x) in probes.iter().enumerate() {
            // outside V_n the kernel is the identity; only interior probes count
            values[p].push(if level.contains(x) { w[x] } else { integrand[x] });
        }
    }
    let tail = if nest.last() == Some(domain) {
        Tail::Exact
    } else {
        Tail::Aitken
    };
    Ok(TraceSequence::from_values(
        probes.iter().map(|x| x.to_string()).collect(),
        (1..=nest.len()).collect(),
        values,
        tail,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k3() -> DiscreteForm {
        DiscreteForm::from_rows(
            vec![1.0; 3],
            vec![
                vec![0.0, 0.5, 0.0],
                vec![0.5, 0.0, 0.5],
                vec![0.0, 0.5, 0.0],
            ],
            vec![1.0, 0.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn k3_killing_part() {
        let f = k3();
        let d = NodeSet::new(3, [1, 2]).unwrap();
        let k = killing_part(&f, &d);
        assert_eq!(k.0, vec![0.0, 1.0, 0.0]);
        assert!(killing_normalization_defect(&f, &d).unwrap() < 1e-14);
    }

    #[test]
    fn trace_vanishes_when_nest_reaches_domain() {
        let f = k3();
        let d = NodeSet::new(3, [1, 2]).unwrap();
        let nest = vec![NodeSet::new(3, [2]).unwrap(), d.clone()];
        let t = trace_sequence(&f, &d, &nest, &vec![0.3, -2.0, 1.0].into()).unwrap();
        assert_eq!(t.max_abs_limit(), 0.0);
        // V_1 = {2}: exit from 2 lands on 1 surely
        assert!((t.values[1][0] - 2.0).abs() < 1e-14);
        assert!(t.to_csv().lines().count() == 5);
    }

    #[test]
    fn empty_nest_is_rejected() {
        let f = k3();
        let d = NodeSet::new(3, [1, 2]).unwrap();
        assert!(trace_sequence(&f, &d, &[], &FunctionVector::zeros(3)).is_err());
    }
}
