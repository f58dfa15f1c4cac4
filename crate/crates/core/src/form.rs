//! Finite-state symmetric pure-jump Dirichlet forms.
//!
//! A form on `n` states is described by a reference measure `m`, a symmetric
//! jump-intensity matrix `J` with zero diagonal and a killing vector `kappa`:
//!
//! ```text
//! E(u, v) = sum_{x,y} (u(x) - u(y)) (v(x) - v(y)) J[x][y] + sum_x u(x) v(x) kappa[x]
//! ```
//!
//! The double sum runs over ordered pairs, so each unordered pair is counted
//! twice. The energy matrix `K` with `E(u, v) = u^T K v` is therefore
//! `2 (diag(J 1) - J) + diag(kappa)` and the generator is `L = -M^{-1} K`.
//! On a finite space every set of positive capacity is nonempty, so all
//! "quasi everywhere" statements are read as "at every state".

use std::ops::{Deref, DerefMut};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node-indexed real values (u, g, h, rho, ...).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FunctionVector(pub Vec<f64>);

/// Node-indexed atom masses.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignedMeasure(pub Vec<f64>);

macro_rules! vector_newtype {
    ($t:ident) => {
        impl $t {
            pub fn zeros(n: usize) -> Self {
                Self(vec![0.0; n])
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }

            pub fn check_len(&self, n: usize) -> Result<()> {
                if self.0.len() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        got: self.0.len(),
                    });
                }
                if !self.is_finite() {
                    return Err(Error::Invalid(format!(
                        "{} has non-finite entries",
                        stringify!($t)
                    )));
                }
                Ok(())
            }

            pub fn abs(&self) -> Self {
                Self(self.0.iter().map(|v| v.abs()).collect())
            }
        }

        impl From<Vec<f64>> for $t {
            fn from(v: Vec<f64>) -> Self {
                Self(v)
            }
        }

        impl Deref for $t {
            type Target = [f64];
            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl DerefMut for $t {
            fn deref_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }
        }
    };
}

vector_newtype!(FunctionVector);
vector_newtype!(SignedMeasure);

impl FunctionVector {
    pub fn indicator(n: usize, set: &NodeSet) -> Self {
        let mut v = vec![0.0; n];
        for &x in set.iter() {
            v[x] = 1.0;
        }
        Self(v)
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

impl SignedMeasure {
    pub fn positive_part(&self) -> Self {
        Self(self.0.iter().map(|v| v.max(0.0)).collect())
    }

    pub fn negative_part(&self) -> Self {
        Self(self.0.iter().map(|v| (-v).max(0.0)).collect())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.0.iter().all(|&v| v >= 0.0)
    }

    /// Revuz density with respect to `m`: atom divided by the reference weight.
    pub fn density(&self, m: &[f64]) -> FunctionVector {
        FunctionVector(self.0.iter().zip(m).map(|(a, w)| a / w).collect())
    }
}

/// A subset of `{0, .., n-1}`, kept sorted.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NodeSet {
    n: usize,
    members: Vec<usize>,
}

impl NodeSet {
    pub fn new(n: usize, members: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut members: Vec<usize> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        if let Some(&bad) = members.iter().find(|&&x| x >= n) {
            return Err(Error::Invalid(format!("state {bad} out of range 0..{n}")));
        }
        Ok(Self { n, members })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            members: Vec::new(),
        }
    }

    pub fn full(n: usize) -> Self {
        Self {
            n,
            members: (0..n).collect(),
        }
    }

    pub fn universe(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, x: usize) -> bool {
        self.members.binary_search(&x).is_ok()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, usize> {
        self.members.iter()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.members
    }

    pub fn complement(&self) -> Self {
        let mask = self.mask();
        Self {
            n: self.n,
            members: (0..self.n).filter(|&x| !mask[x]).collect(),
        }
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.members.iter().all(|&x| other.contains(x))
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.n];
        for &x in &self.members {
            mask[x] = true;
        }
        mask
    }

    /// Position of each member within the sorted member list.
    pub fn position(&self, x: usize) -> Option<usize> {
        self.members.binary_search(&x).ok()
    }
}

#[derive(Deserialize, Serialize)]
struct FormFile {
    m: Vec<f64>,
    #[serde(rename = "J")]
    jump: Vec<Vec<f64>>,
    kappa: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct DiscreteForm {
    m: Vec<f64>,
    jump: DMatrix<f64>,
    kappa: Vec<f64>,
    energy_matrix: DMatrix<f64>,
}

impl DiscreteForm {
    pub fn new(m: Vec<f64>, jump: DMatrix<f64>, kappa: Vec<f64>) -> Result<Self> {
        let n = m.len();
        if jump.nrows() != n || jump.ncols() != n {
            return Err(Error::InvalidForm(format!(
                "J is {}x{}, expected {n}x{n}",
                jump.nrows(),
                jump.ncols()
            )));
        }
        if kappa.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: kappa.len(),
            });
        }
        for (x, &w) in m.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidForm(format!("m[{x}] = {w} is not positive")));
            }
        }
        for (x, &k) in kappa.iter().enumerate() {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::InvalidForm(format!("kappa[{x}] = {k} is negative")));
            }
        }
        for x in 0..n {
            if jump[(x, x)] != 0.0 {
                return Err(Error::InvalidForm(format!("J[{x}][{x}] must be 0")));
            }
            for y in 0..n {
                let a = jump[(x, y)];
                if !(a >= 0.0 && a.is_finite()) {
                    return Err(Error::InvalidForm(format!("J[{x}][{y}] = {a} is negative")));
                }
                let b = jump[(y, x)];
                if (a - b).abs() > 1e-14 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidForm(format!(
                        "J not symmetric: J[{x}][{y}] = {a}, J[{y}][{x}] = {b}"
                    )));
                }
            }
        }
        // exact symmetrisation of sub-ulp differences
        let jump = (&jump + jump.transpose()) * 0.5;
        let energy_matrix = assemble_energy(&jump, &kappa);
        let form = Self {
            m,
            jump,
            kappa,
            energy_matrix,
        };
        let min_eig = form.energy_matrix.clone().symmetric_eigenvalues().min();
        let scale = form.energy_matrix.amax().max(1.0);
        if min_eig < -1e-10 * scale {
            return Err(Error::InvalidForm(format!(
                "energy matrix not positive semidefinite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(form)
    }

    pub fn from_rows(m: Vec<f64>, jump: Vec<Vec<f64>>, kappa: Vec<f64>) -> Result<Self> {
        let n = m.len();
        if jump.len() != n || jump.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidForm(format!("J must be {n}x{n}")));
        }
        let mat = DMatrix::from_fn(n, n, |i, j| jump[i][j]);
        Self::new(m, mat, kappa)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: FormFile = serde_json::from_str(text)?;
        Self::from_rows(raw.m, raw.jump, raw.kappa)
    }

    pub fn to_json(&self) -> String {
        let n = self.n();
        let raw = FormFile {
            m: self.m.clone(),
            jump: (0..n)
                .map(|i| (0..n).map(|j| self.jump[(i, j)]).collect())
                .collect(),
            kappa: self.kappa.clone(),
        };
        serde_json::to_string(&raw).expect("form serialises")
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn m(&self) -> &[f64] {
        &self.m
    }

    pub fn jump(&self) -> &DMatrix<f64> {
        &self.jump
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    /// `K` with `E(u, v) = u^T K v`.
    pub fn energy_matrix(&self) -> &DMatrix<f64> {
        &self.energy_matrix
    }

    /// Bilinear energy evaluated directly from the double sum.
    pub fn energy(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        let n = self.n();
        for len in [u.len(), v.len()] {
            if len != n {
                return Err(Error::Dimension { expected: n, got: len });
            }
        }
        let mut jump_part = 0.0;
        for x in 0..n {
            for y in 0..n {
                let j = self.jump[(x, y)];
                if j != 0.0 {
                    jump_part += (u[x] - u[y]) * (v[x] - v[y]) * j;
                }
            }
        }
        let kill: f64 = (0..n).map(|x| u[x] * v[x] * self.kappa[x]).sum();
        Ok(jump_part + kill)
    }

    /// The matrix `L` with `E(u, v) = sum_x (-L u)(x) v(x) m(x)`.
    pub fn generator(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |x, y| -self.energy_matrix[(x, y)] / self.m[x])
    }

    pub fn restrict<'a>(&'a self, set: &'a NodeSet) -> Result<Restricted<'a>> {
        if set.universe() != self.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                got: set.universe(),
            });
        }
        Ok(Restricted { form: self, set })
    }

    /// Every state of `set` reaches, along J-edges inside `set`, a killed state
    /// or a state with an edge leaving `set`.
    pub fn is_transient(&self, set: &NodeSet) -> bool {
        let n = self.n();
        let inside = set.mask();
        let mut reached = vec![false; n];
        let mut stack = Vec::new();
        for &x in set.iter() {
            let escapes =
                self.kappa[x] > 0.0 || (0..n).any(|y| !inside[y] && self.jump[(x, y)] > 0.0);
            if escapes {
                reached[x] = true;
                stack.push(x);
            }
        }
        while let Some(x) = stack.pop() {
            for y in 0..n {
                if inside[y] && !reached[y] && self.jump[(x, y)] > 0.0 {
                    reached[y] = true;
                    stack.push(y);
                }
            }
        }
        set.iter().all(|&x| reached[x])
    }

    pub(crate) fn require_transient(&self, set: &NodeSet) -> Result<()> {
        if self.is_transient(set) {
            Ok(())
        } else {
            Err(Error::NotTransient(set.as_slice().to_vec()))
        }
    }
}

fn assemble_energy(jump: &DMatrix<f64>, kappa: &[f64]) -> DMatrix<f64> {
    let n = kappa.len();
    let mut k = jump * -2.0;
    for x in 0..n {
        let degree: f64 = jump.row(x).iter().sum();
        k[(x, x)] = 2.0 * degree + kappa[x];
    }
    k
}

/// The form restricted to functions vanishing outside a subset; coordinates
/// are indexed by the sorted members of the subset.
pub struct Restricted<'a> {
    form: &'a DiscreteForm,
    set: &'a NodeSet,
}

impl Restricted<'_> {
    pub fn dim(&self) -> usize {
        self.set.len()
    }

    pub fn set(&self) -> &NodeSet {
        self.set
    }

    /// Principal submatrix `K[V, V]`.
    pub fn matrix(&self) -> DMatrix<f64> {
        principal(self.form.energy_matrix(), self.set.as_slice())
    }

    /// Lift coordinates on `V` to a full vector vanishing on `V^c`.
    pub fn extend(&self, coords: &[f64]) -> FunctionVector {
        let mut out = vec![0.0; self.form.n()];
        for (i, &x) in self.set.iter().enumerate() {
            out[x] = coords[i];
        }
        FunctionVector(out)
    }

    pub fn energy(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        let d = self.dim();
        for len in [u.len(), v.len()] {
            if len != d {
                return Err(Error::Dimension { expected: d, got: len });
            }
        }
        if d == 0 {
            return Ok(0.0);
        }
        self.form.energy(&self.extend(u), &self.extend(v))
    }
}

pub(crate) fn principal(a: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |i, j| a[(idx[i], idx[j])])
}

pub(crate) fn block(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> DiscreteForm {
        DiscreteForm::from_rows(
            vec![1.0, 1.0],
            vec![vec![0.0, 0.5], vec![0.5, 0.0]],
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn two_state_energy_by_hand() {
        let f = two_state();
        assert_eq!(f.energy(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        // (1-0)^2 * 1/2 counted for (0,1) and (1,0), plus kappa[0]
        assert!((f.energy(&[1.0, 0.0], &[1.0, 0.0]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn generator_duality_on_basis() {
        let f = two_state();
        let l = f.generator();
        for i in 0..2 {
            for j in 0..2 {
                let mut ei = [0.0; 2];
                let mut ej = [0.0; 2];
                ei[i] = 1.0;
                ej[j] = 1.0;
                let lhs = f.energy(&ei, &ej).unwrap();
                let rhs: f64 = (0..2).map(|x| -l[(x, i)] * ej[x] * f.m()[x]).sum();
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
        assert_eq!(l[(0, 1)], 1.0);
        assert!(l[(0, 0)] <= 0.0 && l[(1, 1)] <= 0.0);
    }

    #[test]
    fn zero_form_has_zero_generator() {
        let f = DiscreteForm::new(vec![1.0; 3], DMatrix::zeros(3, 3), vec![0.0; 3]).unwrap();
        assert_eq!(f.generator().amax(), 0.0);
    }

    #[test]
    fn transience_cases() {
        let f = two_state();
        assert!(f.is_transient(&NodeSet::full(2)));
        let k = DMatrix::from_row_slice(2, 2, &[2.0, -1.0, -1.0, 1.0]);
        assert!(k.determinant() > 0.0);

        let conservative = DiscreteForm::from_rows(
            vec![1.0; 3],
            vec![
                vec![0.0, 1.0, 0.0],
                vec![1.0, 0.0, 1.0],
                vec![0.0, 1.0, 0.0],
            ],
            vec![0.0; 3],
        )
        .unwrap();
        assert!(!conservative.is_transient(&NodeSet::full(3)));
        assert!(conservative.is_transient(&NodeSet::new(3, [1]).unwrap()));
        assert!(conservative.is_transient(&NodeSet::new(3, [0, 1]).unwrap()));
        assert!(conservative.is_transient(&NodeSet::empty(3)));
    }

    #[test]
    fn restriction_is_principal_submatrix() {
        let f = DiscreteForm::from_rows(
            vec![1.0; 3],
            vec![
                vec![0.0, 0.5, 0.0],
                vec![0.5, 0.0, 0.5],
                vec![0.0, 0.5, 0.0],
            ],
            vec![1.0, 0.0, 0.0],
        )
        .unwrap();
        let v = NodeSet::new(3, [1]).unwrap();
        let r = f.restrict(&v).unwrap();
        let full = f.energy(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert_eq!(r.energy(&[1.0], &[1.0]).unwrap(), full);
        assert_eq!(r.matrix()[(0, 0)], full);

        let all = NodeSet::full(3);
        let r = f.restrict(&all).unwrap();
        let u = [0.3, -1.0, 2.0];
        assert_eq!(r.energy(&u, &u).unwrap(), f.energy(&u, &u).unwrap());

        let none = NodeSet::empty(3);
        let r = f.restrict(&none).unwrap();
        assert_eq!(r.energy(&[], &[]).unwrap(), 0.0);
    }

    #[test]
    fn json_validation_rejects_bad_forms() {
        let ok = r#"{"m":[1,1],"J":[[0,0.5],[0.5,0]],"kappa":[1,0]}"#;
        assert!(DiscreteForm::from_json(ok).is_ok());
        let asym = r#"{"m":[1,1],"J":[[0,0.5],[0.4,0]],"kappa":[1,0]}"#;
        assert!(DiscreteForm::from_json(asym).is_err());
        let diag = r#"{"m":[1,1],"J":[[1,0.5],[0.5,0]],"kappa":[1,0]}"#;
        assert!(DiscreteForm::from_json(diag).is_err());
        let mass = r#"{"m":[0,1],"J":[[0,0.5],[0.5,0]],"kappa":[1,0]}"#;
        assert!(DiscreteForm::from_json(mass).is_err());
        let neg = r#"{"m":[1,1],"J":[[0,-0.5],[-0.5,0]],"kappa":[1,0]}"#;
        assert!(DiscreteForm::from_json(neg).is_err());
        let f = DiscreteForm::from_json(ok).unwrap();
        let back = DiscreteForm::from_json(&f.to_json()).unwrap();
        assert_eq!(back.energy_matrix(), f.energy_matrix());
    }

    #[test]
    fn energy_rejects_wrong_length() {
        let f = two_state();
        assert!(matches!(
            f.energy(&[1.0], &[1.0, 0.0]),
            Err(Error::Dimension { .. })
        ));
    }
}
