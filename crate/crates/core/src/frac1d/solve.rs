//! The semilinear problem on `D = (-1, 1)` with Martin boundary data,
//! exterior data and interior atoms, solved by Nystrom product integration
//! and the truncation ladder, shifted by the Martin part.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::exterior::ExteriorData;
use super::grid::{Grid, GridConfig};
use super::kernels::FracKernels;
use super::ops::{apply_pd, apply_rd, Quadrature};
use super::quad::Node;
use crate::error::{Error, Result};
use crate::fixed_point::{solve_ladder, FixedPointProblem, InnerSolverRegistry, LadderConfig, LadderReport};
use crate::nonlinearity::{check_monotone, default_probe_values, Nonlinearity, Shifted, Site};

#[derive(Clone)]
pub struct ContinuumProblem {
    pub kernels: FracKernels,
    pub g: ExteriorData,
    /// Interior atoms `(z, mass)` of `mu`.
    pub atoms: Vec<(f64, f64)>,
    /// Martin data `nu({-1})`, `nu({+1})`.
    pub martin: [f64; 2],
    pub f: Arc<dyn Nonlinearity>,
    pub ladder: LadderConfig,
    pub grid: GridConfig,
}

impl std::fmt::Debug for ContinuumProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ContinuumProblem")
            .field("alpha", &self.kernels.alpha)
            .field("g", &self.g)
            .field("atoms", &self.atoms)
            .field("martin", &self.martin)
            .field("f", &self.f.name())
            .finish()
    }
}

impl ContinuumProblem {
    pub fn new(alpha: f64, g: ExteriorData, f: Arc<dyn Nonlinearity>) -> Result<Self> {
        g.validate()?;
        Ok(Self {
            kernels: FracKernels::new(alpha)?,
            g,
            atoms: Vec::new(),
            martin: [0.0, 0.0],
            f,
            ladder: LadderConfig::default(),
            grid: GridConfig::default(),
        })
    }

    pub fn with_atoms(mut self, atoms: Vec<(f64, f64)>) -> Result<Self> {
        if let Some(&(z, m)) = atoms.iter().find(|(z, m)| !(z.abs() < 1.0) || !m.is_finite()) {
            return Err(Error::Invalid(format!("atom ({z}, {m}) must sit inside D with finite mass")));
        }
        self.atoms = atoms;
        Ok(self)
    }

    pub fn with_martin(mut self, left: f64, right: f64) -> Result<Self> {
        if !left.is_finite() || !right.is_finite() {
            return Err(Error::Invalid("Martin data must be finite".into()));
        }
        self.martin = [left, right];
        Ok(self)
    }

    pub fn with_grid(mut self, grid: GridConfig) -> Self {
        self.grid = grid;
        self
    }

    pub fn with_ladder(mut self, ladder: LadderConfig) -> Self {
        self.ladder = ladder;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.kernels.alpha
    }

    /// `M_D nu` from the boundary gaps `1 + x` and `1 - x`.
    pub fn martin_gaps(&self, left_gap: f64, right_gap: f64) -> f64 {
        if left_gap <= 0.0 || right_gap <= 0.0 {
            return 0.0;
        }
        let p = (left_gap * right_gap).powf(self.kernels.a);
        let [nl, nr] = self.martin;
        let mut v = 0.0;
        if nl != 0.0 {
            v += nl * p / left_gap;
        }
        if nr != 0.0 {
            v += nr * p / right_gap;
        }
        v
    }

    pub fn martin_part(&self, x: f64) -> f64 {
        self.martin_gaps(1.0 + x, 1.0 - x)
    }

    pub fn atom_part(&self, x: f64) -> f64 {
        self.atoms.iter().map(|&(z, m)| m * self.kernels.green(x, z)).sum()
    }

    fn martin_node(&self, n: &Node) -> f64 {
        self.martin_gaps(n.gap_to(-1.0), n.gap_to(1.0))
    }

    fn atom_node(&self, n: &Node) -> f64 {
        self.atoms.iter().map(|&(z, m)| m * self.kernels.green_node(z, n)).sum()
    }

    pub fn has_martin(&self) -> bool {
        self.martin != [0.0, 0.0]
    }

    /// `int |f(y, M_D nu(y))| G_D(0, y) dy < inf`, judged by refinement.
    pub fn check_martin_integrability(&self, q: &Quadrature) -> Result<f64> {
        if !self.has_martin() {
            return Ok(0.0);
        }
        let v = apply_rd(
            &self.kernels,
            q,
            |n| self.f.eval(Site::Point(n.y), self.martin_node(n)).abs(),
            &[],
            -self.kernels.a,
            &[],
            0.0,
        );
        if !v.value.is_finite() || v.error > 1e-3 * v.value.abs().max(1.0) {
            return Err(Error::Precondition(format!(
                "R^D|f(., M_D nu)| does not settle under refinement (value {:.6e}, change {:.3e})",
                v.value, v.error
            )));
        }
        Ok(v.value)
    }
}

#[derive(Clone, Debug)]
pub struct ContinuumSolution {
    pub problem: ContinuumProblem,
    pub grid: Grid,
    /// `u` at the grid nodes.
    pub u: Vec<f64>,
    /// `P_D g + R^D f(., u)` at the nodes; `u` minus the Martin and atom parts.
    pub regular: Vec<f64>,
    /// `P_D g` at the nodes.
    pub pdg: Vec<f64>,
    pub ladder: LadderReport,
    /// Fixed-point residual on the grid.
    pub residual: f64,
    green: DMatrix<f64>,
}

impl ContinuumSolution {
    pub fn kernels(&self) -> &FracKernels {
        &self.problem.kernels
    }

    pub fn nodes(&self) -> &[f64] {
        &self.grid.nodes
    }

    /// `u(x)`, equal to `g` off `D`.
    pub fn eval(&self, x: f64) -> f64 {
        if x.abs() >= 1.0 {
            return self.problem.g.at(x);
        }
        self.problem.martin_part(x) + self.problem.atom_part(x) + self.grid.interpolate(&self.regular, x)
    }

    /// `u` at a quadrature node inside `D`, with the singular parts taken from
    /// the node's exact gaps.
    pub fn eval_node(&self, n: &Node) -> f64 {
        if n.y.abs() >= 1.0 {
            return self.problem.g.at(n.y);
        }
        self.problem.martin_node(n) + self.problem.atom_node(n) + self.grid.interpolate(&self.regular, n.y)
    }

    pub fn f_values(&self) -> Vec<f64> {
        self.grid
            .nodes
            .iter()
            .zip(&self.u)
            .map(|(&x, &u)| self.problem.f.eval(Site::Point(x), u))
            .collect()
    }

    /// `|u(x) - M_D nu(x) - R^D mu(x) - P_D g(x) - R^D f(., u)(x)|` at points
    /// off the grid; `R^D f` integrates the interpolant of the nodal `f`
    /// values exactly.
    pub fn collocation_residual(&self, q: &Quadrature, xs: &[f64]) -> Result<f64> {
        let fv = self.f_values();
        let mut worst = 0.0f64;
        for &x in xs {
            let row = self.grid.row(self.kernels(), x);
            let rf: f64 = row.iter().zip(&fv).map(|(a, f)| a * f).sum();
            let pdg = apply_pd(self.kernels(), q, &self.problem.g, x)?.value;
            let rhs = self.problem.martin_part(x) + self.problem.atom_part(x) + pdg + rf;
            worst = worst.max((self.eval(x) - rhs).abs());
        }
        Ok(worst)
    }

    /// Grid fixed-point residual `max_i |u_i - M_D nu - R^D mu - P_D g - A f(u)|`
    /// of arbitrary nodal values.
    pub fn residual_of(&self, u: &[f64]) -> f64 {
        let fv: Vec<f64> = self
            .grid
            .nodes
            .iter()
            .zip(u)
            .map(|(&x, &v)| self.problem.f.eval(Site::Point(x), v))
            .collect();
        let rf = &self.green * DVector::from_vec(fv);
        self.grid
            .nodes
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let rhs = self.problem.martin_part(x) + self.problem.atom_part(x) + self.pdg[i] + rf[i];
                (u[i] - rhs).abs()
            })
            .fold(0.0, f64::max)
    }

    /// The same solution with `eps` added to `u` everywhere in `D`; used to
    /// build non-solutions that the checks must reject.
    pub fn perturbed(&self, eps: f64) -> Self {
        let mut s = self.clone();
        s.u.iter_mut().for_each(|v| *v += eps);
        s.regular.iter_mut().for_each(|v| *v += eps);
        s.residual = s.residual_of(&s.u);
        s
    }

    /// The product-integration matrix the solution was computed with.
    pub fn green_matrix(&self) -> &DMatrix<f64> {
        &self.green
    }

    /// `grid,u` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,u\n");
        for (x, u) in self.grid.nodes.iter().zip(&self.u) {
            out.push_str(&format!("{x:.17e},{u:.17e}\n"));
        }
        out
    }
}

pub fn off_grid_probes() -> Vec<f64> {
    vec![-0.95, -0.61, -0.2, 0.013, 0.33, 0.77, 0.99]
}

pub fn solve_continuum(problem: &ContinuumProblem) -> Result<ContinuumSolution> {
    solve_continuum_with(problem, &InnerSolverRegistry::default())
}

pub fn solve_continuum_with(
    problem: &ContinuumProblem,
    registry: &InnerSolverRegistry,
) -> Result<ContinuumSolution> {
    let k = &problem.kernels;
    let q = Quadrature::default();
    let atom_sites: Vec<f64> = problem.atoms.iter().map(|a| a.0).collect();
    let grid = Grid::new(&problem.grid, &atom_sites);
    let sites: Vec<Site> = grid.nodes.iter().map(|&x| Site::Point(x)).collect();
    check_monotone(problem.f.as_ref(), &sites, &default_probe_values())?;
    problem.check_martin_integrability(&q)?;
    // the exterior integral is validated once, then reused at every node
    apply_pd(k, &q, &problem.g, 0.0)?;
    let rule = k.exterior_rule(&q.fine, &problem.g.breaks(), problem.g.endpoint_exponent());
    let pdg: Vec<f64> = grid
        .nodes
        .iter()
        .map(|&x| {
            if problem.g.is_zero() {
                0.0
            } else {
                k.poisson_mass_rule(&rule, x, |y, gap| problem.g.eval(y, gap))
            }
        })
        .collect();
    let base: Vec<f64> = grid
        .nodes
        .iter()
        .zip(&pdg)
        .map(|(&x, p)| p + problem.atom_part(x))
        .collect();
    let green = grid.nystrom(k);
    let shift_problem = problem.clone();
    let shifted = Shifted {
        inner: problem.f.clone(),
        shift: Arc::new(move |site| match site {
            Site::Point(x) => shift_problem.martin_part(x),
            Site::State(_) => 0.0,
        }),
    };
    let fp = FixedPointProblem {
        sites: &sites,
        base: &base,
        green: &green,
    };
    let (w, ladder) = solve_ladder(&fp, &shifted, &problem.ladder, registry)?;
    let residual = fp.residual(&shifted, &w);
    let u: Vec<f64> = grid
        .nodes
        .iter()
        .zip(&w)
        .map(|(&x, w)| problem.martin_part(x) + w)
        .collect();
    let regular: Vec<f64> = grid
        .nodes
        .iter()
        .zip(&w)
        .map(|(&x, w)| w - problem.atom_part(x))
        .collect();
    Ok(ContinuumSolution {
        problem: problem.clone(),
        grid,
        u,
        regular,
        pdg,
        ladder,
        residual,
        green,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{Power, Zero};

    fn cubic() -> Arc<dyn Nonlinearity> {
        Arc::new(Power {
            b: crate::nonlinearity::Coefficient::Constant(1.0),
            p: 3.0,
        })
    }

    #[test]
    fn zero_data_give_zero() {
        let p = ContinuumProblem::new(1.0, ExteriorData::Zero, Arc::new(Zero)).unwrap();
        let s = solve_continuum(&p).unwrap();
        assert!(s.u.iter().all(|&v| v == 0.0));
        assert_eq!(s.eval(0.4), 0.0);
    }

    #[test]
    fn linear_problem_matches_closed_forms() {
        // u = P_D 1 + R^D 1 + G(., 0.2) = 1 + E_x tau + G(x, 0.2) with f = 1 as a source
        let f = Arc::new(crate::nonlinearity::WithSource {
            inner: Arc::new(Zero),
            source: crate::nonlinearity::Coefficient::Constant(1.0),
        });
        let p = ContinuumProblem::new(0.7, ExteriorData::Constant { value: 1.0 }, f)
            .unwrap()
            .with_atoms(vec![(0.2, 1.0)])
            .unwrap();
        let s = solve_continuum(&p).unwrap();
        let k = &p.kernels;
        for x in [-0.9, 0.0, 0.19, 0.5, 0.999] {
            let exact = 1.0 + k.mean_exit(x) + k.green(x, 0.2);
            assert!((s.eval(x) - exact).abs() < 1e-7, "x {x}: {} vs {exact}", s.eval(x));
        }
    }

    #[test]
    fn cubic_problem_residuals() {
        let p = ContinuumProblem::new(1.5, ExteriorData::Sided { left: -1.0, right: 2.0 }, cubic()).unwrap();
        let s = solve_continuum(&p).unwrap();
        assert!(s.residual < 1e-9, "{}", s.residual);
        let r = s.collocation_residual(&Quadrature::default(), &off_grid_probes()).unwrap();
        assert!(r < 1e-6, "{r}");
        // comparison with the data: the cubic pulls u toward zero
        assert!(s.u.iter().all(|&v| v > -1.0 && v < 2.0));
        assert!((s.residual_of(&s.u) - s.residual).abs() < 1e-12);
        let bad = s.perturbed(1e-3);
        assert!(bad.residual > 1e-4, "{}", bad.residual);
        let r = bad.collocation_residual(&Quadrature::default(), &off_grid_probes()).unwrap();
        assert!(r > 1e-4);
    }

    #[test]
    fn pure_martin_input() {
        let p = ContinuumProblem::new(1.0, ExteriorData::Zero, Arc::new(Zero))
            .unwrap()
            .with_martin(0.0, 1.0)
            .unwrap();
        let s = solve_continuum(&p).unwrap();
        assert!((s.eval(0.0) - 1.0).abs() < 1e-14);
        assert!((s.eval(0.5) - p.kernels.martin(0.5, 1.0)).abs() < 1e-14);
    }

    #[test]
    fn martin_integrability_failure_is_reported() {
        // |f(M)| ~ delta^{-9/4} is not integrable against G ~ delta^{1/4}
        let p = ContinuumProblem::new(0.5, ExteriorData::Zero, cubic())
            .unwrap()
            .with_martin(1.0, 0.0)
            .unwrap();
        assert!(matches!(solve_continuum(&p), Err(Error::Precondition(_))));
    }
}
