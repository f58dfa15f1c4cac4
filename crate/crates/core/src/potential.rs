//! Green operators `R^V`, Dynkin identities, excessive functions and exact
//! moments of exit functionals.
//!
//! Measures are stored as atoms; the potential of an atom vector `mu` on `V`
//! is `K[V,V]^{-1} mu[V]` extended by zero, i.e. the unique element of `F(V)`
//! with `E(R^V mu, eta) = <mu, eta>`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::form::{DiscreteForm, FunctionVector, NodeSet, SignedMeasure};
use crate::projection::{project_with, SubsetSolver};

/// `(-L_V)^{-1}`, acting on densities: `R^V f = G f`.
#[derive(Clone, Debug)]
pub struct GreenOperator {
    set: NodeSet,
    matrix: DMatrix<f64>,
    m: Vec<f64>,
}

impl GreenOperator {
    pub fn new(form: &DiscreteForm, set: &NodeSet) -> Result<Self> {
        let solver = SubsetSolver::new(form, set)?;
        let kernel = solver.inverse();
        let m: Vec<f64> = set.iter().map(|&x| form.m()[x]).collect();
        let matrix = DMatrix::from_fn(set.len(), set.len(), |i, j| kernel[(i, j)] * m[j]);
        Ok(Self {
            set: set.clone(),
            matrix,
            m,
        })
    }

    pub fn set(&self) -> &NodeSet {
        &self.set
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Symmetric Green density `g(x, y)` with `G[x][y] = g(x, y) m(y)`.
    pub fn kernel(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.m.len(), self.m.len(), |i, j| {
            self.matrix[(i, j)] / self.m[j]
        })
    }

    /// Worst violation of `G[x][y] m[x] = G[y][x] m[y]` and of positivity.
    pub fn invariant_defect(&self) -> f64 {
        let d = self.m.len();
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in 0..d {
                let a = self.matrix[(i, j)] * self.m[i];
                let b = self.matrix[(j, i)] * self.m[j];
                worst = worst.max((a - b).abs()).max(-self.matrix[(i, j)] - 1e-14);
            }
        }
        worst
    }
}

/// `R^V mu` extended by zero off `V`.
pub fn green_apply(form: &DiscreteForm, set: &NodeSet, mu: &SignedMeasure) -> Result<FunctionVector> {
    mu.check_len(form.n())?;
    let solver = SubsetSolver::new(form, set)?;
    Ok(solver.solve_extended(mu))
}

/// `R^V f` for a density `f`, i.e. the potential of `f * m`.
pub fn green_apply_density(
    form: &DiscreteForm,
    set: &NodeSet,
    f: &FunctionVector,
) -> Result<FunctionVector> {
    f.check_len(form.n())?;
    let mu: Vec<f64> = f.iter().zip(form.m()).map(|(a, w)| a * w).collect();
    green_apply(form, set, &SignedMeasure(mu))
}

/// `max |pi_V(R^W mu) - R^V mu|` for `V` contained in `W`.
pub fn dynkin_defect(
    form: &DiscreteForm,
    inner: &NodeSet,
    outer: &NodeSet,
    mu: &SignedMeasure,
) -> Result<f64> {
    if !inner.is_subset(outer) {
        return Err(Error::Precondition("dynkin_defect needs V inside W".into()));
    }
    mu.check_len(form.n())?;
    let outer_solver = SubsetSolver::new(form, outer)?;
    let inner_solver = SubsetSolver::new(form, inner)?;
    let rw = outer_solver.solve_extended(mu);
    let projected = project_with(&inner_solver, &rw);
    let rv = inner_solver.solve_extended(mu);
    Ok(projected
        .iter()
        .zip(rv.iter())
        .fold(0.0, |a, (p, r)| a.max((p - r).abs())))
}

/// Finite-state excessiveness on `V`: `rho >= 0` on `V` and
/// `(-L_V rho)(x) >= -1e-12` for `x` in `V`.
pub fn is_excessive(form: &DiscreteForm, set: &NodeSet, rho: &FunctionVector) -> bool {
    if rho.len() != form.n() || !rho.is_finite() {
        return false;
    }
    let k = form.energy_matrix();
    set.iter().all(|&x| {
        if rho[x] < 0.0 {
            return false;
        }
        let flux: f64 = set.iter().map(|&y| k[(x, y)] * rho[y]).sum::<f64>() / form.m()[x];
        flux >= -1e-12
    })
}

#[derive(Clone, Debug)]
pub struct SecondMoment {
    /// `E_x (A^mu_{tau_D})^2` for every state.
    pub exact: FunctionVector,
    /// `2 ||R^D mu||_inf^2`.
    pub bound: f64,
}

impl SecondMoment {
    pub fn slack(&self) -> f64 {
        self.bound - self.exact.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
    }
}

/// Exact second moment `2 R^D(rho_mu R^D mu)` with `rho_mu = mu / m`.
pub fn exit_second_moment(
    form: &DiscreteForm,
    domain: &NodeSet,
    mu: &SignedMeasure,
) -> Result<SecondMoment> {
    mu.check_len(form.n())?;
    if !mu.is_nonnegative() {
        return Err(Error::Precondition("second moment needs a nonnegative measure".into()));
    }
    let solver = SubsetSolver::new(form, domain)?;
    let potential = solver.solve_extended(mu);
    // rho_mu * R^D mu as a density, times m, is mu * R^D mu as a measure
    let weighted: Vec<f64> = mu.iter().zip(potential.iter()).map(|(a, r)| a * r).collect();
    let inner = solver.solve_extended(&weighted);
    let exact = FunctionVector(inner.iter().map(|v| 2.0 * v).collect());
    let sup = potential.max_abs();
    Ok(SecondMoment {
        exact,
        bound: 2.0 * sup * sup,
    })
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
    fn zero_measure_has_zero_potential() {
        let f = k3();
        let v = NodeSet::new(3, [1, 2]).unwrap();
        let r = green_apply(&f, &v, &SignedMeasure::zeros(3)).unwrap();
        assert_eq!(r.max_abs(), 0.0);
    }

    #[test]
    fn k3_unit_atom_scalar() {
        let f = k3();
        let v = NodeSet::new(3, [1]).unwrap();
        let r = green_apply(&f, &v, &vec![0.0, 1.0, 0.0].into()).unwrap();
        // K[1][1] = 2
        assert!((r[1] - 0.5).abs() < 1e-15);
        assert_eq!(r[0], 0.0);
        assert_eq!(r[2], 0.0);
    }

    #[test]
    fn dynkin_equal_sets_and_exterior_mass() {
        let f = k3();
        let w = NodeSet::new(3, [1, 2]).unwrap();
        let v = NodeSet::new(3, [1]).unwrap();
        let mu: SignedMeasure = vec![0.0, 0.7, -0.2].into();
        assert!(dynkin_defect(&f, &w, &w, &mu).unwrap() < 1e-14);
        let outside: SignedMeasure = vec![0.0, 0.0, 1.3].into();
        let rv = green_apply(&f, &v, &outside).unwrap();
        assert_eq!(rv.max_abs(), 0.0);
        assert!(dynkin_defect(&f, &v, &w, &outside).unwrap() < 1e-14);
        assert!(dynkin_defect(&f, &w, &v, &outside).is_err());
    }

    #[test]
    fn excessive_examples() {
        let f = k3();
        let d = NodeSet::new(3, [1, 2]).unwrap();
        assert!(is_excessive(&f, &d, &vec![1.0; 3].into()));
        assert!(!is_excessive(&f, &d, &vec![-1.0; 3].into()));
        let pot = green_apply(&f, &d, &vec![0.0, 0.3, 1.0].into()).unwrap();
        assert!(is_excessive(&f, &d, &pot));
    }

    #[test]
    fn k3_second_moment_by_nested_solves() {
        // D = {1, 2}: K_DD = [[2, -1], [-1, 1]], inverse [[1, 1], [1, 2]]
        let f = k3();
        let d = NodeSet::new(3, [1, 2]).unwrap();
        let sm = exit_second_moment(&f, &d, &vec![0.0, 0.0, 1.0].into()).unwrap();
        // R mu = (1, 2) on (1, 2); mu * R mu = (0, 2); R of that = (2, 4); times 2
        assert!((sm.exact[1] - 4.0).abs() < 1e-13);
        assert!((sm.exact[2] - 8.0).abs() < 1e-13);
        assert!((sm.bound - 8.0).abs() < 1e-13);
        let zero = exit_second_moment(&f, &d, &SignedMeasure::zeros(3)).unwrap();
        assert_eq!(zero.bound, 0.0);
        assert!(exit_second_moment(&f, &d, &vec![0.0, -1.0, 0.0].into()).is_err());
    }

    #[test]
    fn green_operator_weighted_symmetry() {
        let f = DiscreteForm::from_rows(
            vec![1.0, 2.0, 0.5],
            vec![
                vec![0.0, 0.5, 0.1],
                vec![0.5, 0.0, 0.5],
                vec![0.1, 0.5, 0.0],
            ],
            vec![1.0, 0.0, 0.2],
        )
        .unwrap();
        let g = GreenOperator::new(&f, &NodeSet::full(3)).unwrap();
        assert!(g.invariant_defect() < 1e-12);
        let k = g.kernel();
        assert!((k.clone() - k.transpose()).amax() < 1e-12);
    }
}
