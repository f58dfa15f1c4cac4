//! Orthogonal projection onto `F(V)`, harmonic extension and Poisson kernels.
//!
//! With `K` the energy matrix, the projection of `u` onto functions
//! supported on `V` solves `K[V,V] w = (K u)[V]`. The harmonic extension is
//! `h_V(g) = g - pi_V(g)`, which equals `g` off `V` and
//! `-K[V,V]^{-1} K[V,V^c] g[V^c]` on `V`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::form::{block, principal, DiscreteForm, FunctionVector, NodeSet};

/// Cholesky factor of `K[V,V]` together with the index bookkeeping.
pub struct SubsetSolver<'a> {
    form: &'a DiscreteForm,
    set: NodeSet,
    chol: Option<Cholesky<f64, Dyn>>,
}

impl<'a> SubsetSolver<'a> {
    pub fn new(form: &'a DiscreteForm, set: &NodeSet) -> Result<Self> {
        if set.universe() != form.n() {
            return Err(Error::Dimension {
                expected: form.n(),
                got: set.universe(),
            });
        }
        form.require_transient(set)?;
        let chol = if set.is_empty() {
            None
        } else {
            let k = principal(form.energy_matrix(), set.as_slice());
            Some(Cholesky::new(k).ok_or_else(|| Error::NotTransient(set.as_slice().to_vec()))?)
        };
        Ok(Self {
            form,
            set: set.clone(),
            chol,
        })
    }

    pub fn form(&self) -> &DiscreteForm {
        self.form
    }

    pub fn set(&self) -> &NodeSet {
        &self.set
    }

    /// Solve `K[V,V] x = rhs` for `rhs` indexed by the members of `V`.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        match &self.chol {
            None => Vec::new(),
            Some(c) => c.solve(&DVector::from_column_slice(rhs)).as_slice().to_vec(),
        }
    }

    pub fn solve_matrix(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.chol {
            None => DMatrix::zeros(0, rhs.ncols()),
            Some(c) => c.solve(rhs),
        }
    }

    /// `K[V,V]^{-1}`, the Green kernel as a density with respect to `m`.
    pub fn inverse(&self) -> DMatrix<f64> {
        match &self.chol {
            None => DMatrix::zeros(0, 0),
            Some(c) => c.inverse(),
        }
    }

    /// Solve on `V` and extend by zero.
    pub fn solve_extended(&self, rhs_full: &[f64]) -> FunctionVector {
        let rhs: Vec<f64> = self.set.iter().map(|&x| rhs_full[x]).collect();
        let sol = self.solve(&rhs);
        let mut out = vec![0.0; self.form.n()];
        for (i, &x) in self.set.iter().enumerate() {
            out[x] = sol[i];
        }
        FunctionVector(out)
    }
}

fn mat_vec(k: &DMatrix<f64>, u: &[f64]) -> Vec<f64> {
    (k * DVector::from_column_slice(u)).as_slice().to_vec()
}

/// `pi_V(u)`: the E-orthogonal projection onto functions supported on `V`.
pub fn project(form: &DiscreteForm, set: &NodeSet, u: &FunctionVector) -> Result<FunctionVector> {
    u.check_len(form.n())?;
    let solver = SubsetSolver::new(form, set)?;
    Ok(project_with(&solver, u))
}

pub fn project_with(solver: &SubsetSolver<'_>, u: &[f64]) -> FunctionVector {
    let ku = mat_vec(solver.form().energy_matrix(), u);
    solver.solve_extended(&ku)
}

/// `h_V(g) = g - pi_V(g)`.
pub fn harmonic_extension(
    form: &DiscreteForm,
    set: &NodeSet,
    g: &FunctionVector,
) -> Result<FunctionVector> {
    let p = project(form, set, g)?;
    Ok(FunctionVector(g.iter().zip(p.iter()).map(|(a, b)| a - b).collect()))
}

/// Exit law `P_V(x, .)` for every starting state `x`.
#[derive(Clone, Debug)]
pub struct PoissonKernel {
    set: NodeSet,
    p: DMatrix<f64>,
}

impl PoissonKernel {
    pub fn set(&self) -> &NodeSet {
        &self.set
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn row(&self, x: usize) -> Vec<f64> {
        self.p.row(x).iter().copied().collect()
    }

    /// Probability of dying inside `V` when started at `x`.
    pub fn row_defect(&self, x: usize) -> f64 {
        1.0 - self.p.row(x).sum()
    }

    pub fn apply(&self, g: &[f64]) -> FunctionVector {
        FunctionVector(mat_vec(&self.p, g))
    }

    /// Largest violation of the structural invariants (sub-stochastic rows,
    /// unit masses off `V`, no mass on `V`).
    pub fn invariant_defect(&self) -> f64 {
        let n = self.p.nrows();
        let mut worst: f64 = 0.0;
        for x in 0..n {
            let sum: f64 = self.p.row(x).sum();
            worst = worst.max(sum - 1.0);
            for y in 0..n {
                let v = self.p[(x, y)];
                worst = worst.max(-v);
                if self.set.contains(y) {
                    worst = worst.max(v.abs());
                }
            }
            if !self.set.contains(x) {
                for y in 0..n {
                    let target = if x == y { 1.0 } else { 0.0 };
                    worst = worst.max((self.p[(x, y)] - target).abs());
                }
            }
        }
        worst
    }
}

/// Assemble `P_V` column by column: column `y` is the harmonic extension of
/// the indicator of `y`, for `y` outside `V`.
pub fn poisson_kernel(form: &DiscreteForm, set: &NodeSet) -> Result<PoissonKernel> {
    let solver = SubsetSolver::new(form, set)?;
    Ok(poisson_kernel_with(&solver))
}

pub fn poisson_kernel_with(solver: &SubsetSolver<'_>) -> PoissonKernel {
    let form = solver.form();
    let set = solver.set();
    let n = form.n();
    let outside = set.complement();
    let mut p = DMatrix::zeros(n, n);
    for &y in outside.iter() {
        p[(y, y)] = 1.0;
    }
    if !set.is_empty() && !outside.is_empty() {
        let coupling = block(form.energy_matrix(), set.as_slice(), outside.as_slice());
        let inner = -solver.solve_matrix(&coupling);
        for (i, &x) in set.iter().enumerate() {
            for (j, &y) in outside.iter().enumerate() {
                p[(x, y)] = inner[(i, j)];
            }
        }
    }
    PoissonKernel {
        set: set.clone(),
        p,
    }
}

/// Minimal atomic carrier of `nu(A) = sum_{x in D} P_D(x, A) w(x)`.
pub fn harmonic_boundary(
    form: &DiscreteForm,
    domain: &NodeSet,
    weights: &FunctionVector,
) -> Result<NodeSet> {
    weights.check_len(form.n())?;
    let kernel = poisson_kernel(form, domain)?;
    Ok(harmonic_boundary_from(&kernel, weights))
}

pub fn harmonic_boundary_from(kernel: &PoissonKernel, weights: &[f64]) -> NodeSet {
    let set = kernel.set();
    let n = set.universe();
    let nu: Vec<(usize, f64)> = set
        .complement()
        .iter()
        .map(|&y| {
            let mass: f64 = set.iter().map(|&x| kernel.p[(x, y)] * weights[x]).sum();
            (y, mass)
        })
        .collect();
    let total: f64 = nu.iter().map(|(_, v)| v.abs()).sum();
    let guard = 1e-14 * total.max(1.0);
    NodeSet::new(n, nu.into_iter().filter(|&(_, v)| v > guard).map(|(y, _)| y))
        .expect("indices in range")
}
