//! The truncation ladder for `u = base + G f(., u)` on a finite set of sites,
//! shared by both backends.
//!
//! For monotone `f` there is no contraction constant, so each bounded
//! truncation `f_{n,m}` is solved by an interchangeable inner solver and the
//! levels `n, m` are doubled until the iterates stop moving. Along the ladder
//! `u_{n,m}` is nondecreasing in `n` and nonincreasing in `m`; violations of
//! that ordering are recorded rather than hidden.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nonlinearity::{Coefficient, Nonlinearity, Site, Truncated};

/// `u = base + green * f(sites, u)`, with `green` acting on density values.
pub struct FixedPointProblem<'a> {
    pub sites: &'a [Site],
    pub base: &'a [f64],
    pub green: &'a DMatrix<f64>,
}

impl FixedPointProblem<'_> {
    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn f_values(&self, f: &dyn Nonlinearity, u: &[f64]) -> Vec<f64> {
        self.sites.iter().zip(u).map(|(&s, &y)| f.eval(s, y)).collect()
    }

    /// `base + G f(u)`.
    pub fn map(&self, f: &dyn Nonlinearity, u: &[f64]) -> Vec<f64> {
        let fv = DVector::from_vec(self.f_values(f, u));
        let gf = self.green * fv;
        self.base.iter().zip(gf.iter()).map(|(b, g)| b + g).collect()
    }

    pub fn residual(&self, f: &dyn Nonlinearity, u: &[f64]) -> f64 {
        max_diff(&self.map(f, u), u)
    }
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

#[derive(Clone, Debug)]
pub struct InnerOutcome {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub method: &'static str,
}

/// Solver for a single bounded truncation level.
pub trait InnerSolver: Send + Sync {
    fn name(&self) -> &'static str;

    fn solve(
        &self,
        problem: &FixedPointProblem<'_>,
        f: &dyn Nonlinearity,
        init: &[f64],
        tol: f64,
    ) -> InnerOutcome;
}

/// `u <- (1 - theta) u + theta T(u)` with `theta` grown on residual decrease
/// and halved otherwise.
pub struct DampedPicard {
    pub max_iter: usize,
}

impl InnerSolver for DampedPicard {
    fn name(&self) -> &'static str {
        "picard"
    }

    fn solve(
        &self,
        problem: &FixedPointProblem<'_>,
        f: &dyn Nonlinearity,
        init: &[f64],
        tol: f64,
    ) -> InnerOutcome {
        let mut u = init.to_vec();
        let mut t = problem.map(f, &u);
        let mut res = max_diff(&t, &u);
        let mut theta: f64 = 1.0;
        let mut iterations = 0;
        while res > tol && iterations < self.max_iter && theta > 1e-6 {
            iterations += 1;
            let cand: Vec<f64> = u
                .iter()
                .zip(&t)
                .map(|(a, b)| a + theta * (b - a))
                .collect();
            let cand_t = problem.map(f, &cand);
            let cand_res = max_diff(&cand_t, &cand);
            if cand_res < res {
                u = cand;
                t = cand_t;
                res = cand_res;
                theta = (theta * 1.5).min(1.0);
            } else {
                theta *= 0.5;
            }
        }
        InnerOutcome {
            u,
            iterations,
            residual: res,
            converged: res <= tol,
            method: "picard",
        }
    }
}

/// Semismooth Newton on `F(u) = u - base - G f(u)` with backtracking on `|F|_2`.
pub struct SemismoothNewton {
    pub max_iter: usize,
}

impl InnerSolver for SemismoothNewton {
    fn name(&self) -> &'static str {
        "newton"
    }

    fn solve(
        &self,
        problem: &FixedPointProblem<'_>,
        f: &dyn Nonlinearity,
        init: &[f64],
        tol: f64,
    ) -> InnerOutcome {
        let n = problem.dim();
        let mut u = init.to_vec();
        let defect = |u: &[f64]| -> Vec<f64> {
            let t = problem.map(f, u);
            u.iter().zip(&t).map(|(a, b)| a - b).collect()
        };
        let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut fu = defect(&u);
        let mut res = fu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut iterations = 0;
        while res > tol && iterations < self.max_iter {
            iterations += 1;
            let slopes: Vec<f64> = problem
                .sites
                .iter()
                .zip(&u)
                .map(|(&s, &y)| f.derivative(s, y))
                .collect();
            let jac = DMatrix::from_fn(n, n, |i, j| {
                let id = if i == j { 1.0 } else { 0.0 };
                id - problem.green[(i, j)] * slopes[j]
            });
            let rhs = DVector::from_iterator(n, fu.iter().map(|v| -v));
            let Some(step) = jac.lu().solve(&rhs) else {
                break;
            };
            let base_norm = norm2(&fu);
            let mut lambda = 1.0;
            let mut accepted = false;
            while lambda > 1e-10 {
                let cand: Vec<f64> = u.iter().zip(step.iter()).map(|(a, d)| a + lambda * d).collect();
                let fc = defect(&cand);
                if norm2(&fc) < (1.0 - 1e-4 * lambda) * base_norm || norm2(&fc) == 0.0 {
                    u = cand;
                    fu = fc;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            res = fu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !accepted {
                break;
            }
        }
        InnerOutcome {
            u,
            iterations,
            residual: res,
            converged: res <= tol,
            method: "newton",
        }
    }
}

/// Damped fixed-point iteration, falling back to semismooth Newton when it
/// stalls.
pub struct PicardNewton {
    pub picard_iter: usize,
    pub newton_iter: usize,
}

impl InnerSolver for PicardNewton {
    fn name(&self) -> &'static str {
        "picard-newton"
    }

    fn solve(
        &self,
        problem: &FixedPointProblem<'_>,
        f: &dyn Nonlinearity,
        init: &[f64],
        tol: f64,
    ) -> InnerOutcome {
        let first = DampedPicard {
            max_iter: self.picard_iter,
        }
        .solve(problem, f, init, tol);
        if first.converged {
            return first;
        }
        let mut second = SemismoothNewton {
            max_iter: self.newton_iter,
        }
        .solve(problem, f, &first.u, tol);
        second.iterations += first.iterations;
        second.method = "picard-newton";
        if second.residual <= first.residual {
            second
        } else {
            first
        }
    }
}

type InnerBuilder = fn() -> Box<dyn InnerSolver>;

/// Inner solvers by name.
pub struct InnerSolverRegistry {
    builders: BTreeMap<&'static str, InnerBuilder>,
}

impl Default for InnerSolverRegistry {
    fn default() -> Self {
        let mut builders: BTreeMap<&'static str, InnerBuilder> = BTreeMap::new();
        builders.insert("picard", || Box::new(DampedPicard { max_iter: 20_000 }));
        builders.insert("newton", || Box::new(SemismoothNewton { max_iter: 200 }));
        builders.insert("picard-newton", || {
            Box::new(PicardNewton {
                picard_iter: 200,
                newton_iter: 200,
            })
        });
        Self { builders }
    }
}

impl InnerSolverRegistry {
    pub fn register(&mut self, name: &'static str, builder: InnerBuilder) {
        self.builders.insert(name, builder);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.builders.keys().copied().collect()
    }

    pub fn get(&self, name: &str) -> Result<Box<dyn InnerSolver>> {
        self.builders
            .get(name)
            .map(|b| b())
            .ok_or_else(|| Error::Unknown {
                kind: "inner solver",
                name: name.to_string(),
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LadderOrder {
    /// `u = inf_m sup_n u_{n,m}`: lower level outside.
    #[default]
    LowerOuter,
    /// `u = sup_n inf_m u_{n,m}`: upper level outside.
    UpperOuter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LadderConfig {
    pub start: f64,
    pub factor: f64,
    pub max_levels: usize,
    pub tol: f64,
    pub inner_tol: f64,
    pub order: LadderOrder,
    pub inner: String,
    pub rho: Coefficient,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            start: 1.0,
            factor: 2.0,
            max_levels: 64,
            tol: 1e-10,
            inner_tol: 1e-13,
            order: LadderOrder::LowerOuter,
            inner: "picard-newton".into(),
            rho: Coefficient::Constant(1.0),
        }
    }
}

impl LadderConfig {
    fn levels(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.max_levels).map(|k| self.start * self.factor.powi(k as i32))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start > 0.0 && self.factor > 1.0 && self.tol > 0.0 && self.inner_tol > 0.0) {
            return Err(Error::Invalid(
                "ladder needs start > 0, factor > 1 and positive tolerances".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LadderStep {
    pub upper: f64,
    pub lower: f64,
    pub iterations: usize,
    pub inner_residual: f64,
    pub change: f64,
    pub method: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LadderReport {
    pub steps: Vec<LadderStep>,
    /// Largest violation of the ladder ordering (0 when monotone).
    pub monotonicity_violation: f64,
    /// Residual of the untruncated fixed-point equation.
    pub residual: f64,
}

struct Ladder<'p, 'f> {
    problem: &'p FixedPointProblem<'p>,
    f: &'f dyn Nonlinearity,
    config: &'p LadderConfig,
    inner: Box<dyn InnerSolver>,
    report: LadderReport,
    /// previous outer level's iterates keyed by inner level index
    previous_row: HashMap<usize, Vec<f64>>,
}

impl Ladder<'_, '_> {
    fn solve_level(&mut self, upper: f64, lower: f64, init: &[f64]) -> Vec<f64> {
        let t = Truncated {
            inner: self.f,
            upper_level: upper,
            lower_level: lower,
            rho: &self.config.rho,
        };
        let out = self.inner.solve(self.problem, &t, init, self.config.inner_tol);
        self.report.steps.push(LadderStep {
            upper,
            lower,
            iterations: out.iterations,
            inner_residual: out.residual,
            change: max_diff(&out.u, init),
            method: out.method.to_string(),
        });
        out.u
    }

    /// `a <= b` should hold; record by how much it fails.
    fn order(&mut self, a: &[f64], b: &[f64]) {
        let v = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max(x - y));
        self.report.monotonicity_violation = self.report.monotonicity_violation.max(v);
    }

    fn clamp_inactive(&self, u: &[f64], upper: f64, lower: f64) -> bool {
        let t = Truncated {
            inner: self.f,
            upper_level: upper,
            lower_level: lower,
            rho: &self.config.rho,
        };
        self.problem
            .sites
            .iter()
            .zip(u)
            .all(|(&s, &y)| t.eval(s, y) == self.f.eval(s, y))
    }

    fn run(mut self, init: Vec<f64>) -> Result<(Vec<f64>, LadderReport)> {
        let levels: Vec<f64> = self.config.levels().collect();
        let tol = self.config.tol;
        let upper_outer = self.config.order == LadderOrder::UpperOuter;
        let mut outer_prev: Option<Vec<f64>> = None;
        let mut warm = init;
        let mut last_change = f64::INFINITY;
        for &outer in &levels {
            let mut inner_prev: Option<Vec<f64>> = None;
            let mut inner_converged = false;
            let mut used = (outer, outer);
            let mut row = HashMap::new();
            for (k, &inner) in levels.iter().enumerate() {
                let (upper, lower) = if upper_outer { (outer, inner) } else { (inner, outer) };
                used = (upper, lower);
                let u = self.solve_level(upper, lower, &warm);
                if let Some(prev) = self.previous_row.get(&k).cloned() {
                    // across outer levels: lower-outer decreases, upper-outer increases
                    if upper_outer {
                        self.order(&prev, &u);
                    } else {
                        self.order(&u, &prev);
                    }
                }
                let change = inner_prev.as_ref().map(|p| max_diff(p, &u));
                if let Some(p) = &inner_prev {
                    if upper_outer {
                        self.order(&u, p);
                    } else {
                        self.order(p, &u);
                    }
                }
                row.insert(k, u.clone());
                warm = u.clone();
                let inner_done = match change {
                    Some(c) => {
                        c < tol && {
                            let (up, lo) = if upper_outer {
                                (outer, f64::INFINITY)
                            } else {
                                (f64::INFINITY, outer)
                            };
                            self.clamp_inactive(&u, up, lo)
                        }
                    }
                    None => false,
                };
                inner_prev = Some(u);
                if inner_done {
                    inner_converged = true;
                    break;
                }
            }
            self.previous_row = row;
            let u_outer = inner_prev.expect("at least one level");
            if let Some(prev) = &outer_prev {
                if upper_outer {
                    self.order(prev, &u_outer);
                } else {
                    self.order(&u_outer, prev);
                }
                last_change = max_diff(prev, &u_outer);
                if inner_converged
                    && last_change < tol
                    && self.clamp_inactive(&u_outer, used.0, used.1)
                {
                    self.report.residual = self.problem.residual(self.f, &u_outer);
                    return Ok((u_outer, self.report));
                }
            }
            outer_prev = Some(u_outer);
        }
        Err(Error::NotConverged {
            levels: levels.len(),
            change: last_change,
            best: outer_prev.unwrap_or_default(),
        })
    }
}

/// Solve `u = base + G f(u)` through the truncation ladder.
pub fn solve_ladder(
    problem: &FixedPointProblem<'_>,
    f: &dyn Nonlinearity,
    config: &LadderConfig,
    registry: &InnerSolverRegistry,
) -> Result<(Vec<f64>, LadderReport)> {
    config.validate()?;
    if problem.green.nrows() != problem.dim()
        || problem.green.ncols() != problem.dim()
        || problem.sites.len() != problem.dim()
    {
        return Err(Error::Dimension {
            expected: problem.dim(),
            got: problem.green.nrows(),
        });
    }
    let ladder = Ladder {
        problem,
        f,
        config,
        inner: registry.get(&config.inner)?,
        report: LadderReport::default(),
        previous_row: HashMap::new(),
    };
    ladder.run(problem.base.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlinearity::{Exponential, Power, Zero};

    fn sites(n: usize) -> Vec<Site> {
        (0..n).map(Site::State).collect()
    }

    #[test]
    fn zero_nonlinearity_returns_base() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let s = sites(2);
        let base = [0.3, -0.2];
        let p = FixedPointProblem {
            sites: &s,
            base: &base,
            green: &g,
        };
        let (u, rep) = solve_ladder(&p, &Zero, &LadderConfig::default(), &Default::default()).unwrap();
        assert_eq!(u, base.to_vec());
        assert_eq!(rep.residual, 0.0);
    }

    #[test]
    fn scalar_cubic_matches_bisection() {
        // u = 2 - 3 u^3
        let g = DMatrix::from_row_slice(1, 1, &[3.0]);
        let s = sites(1);
        let base = [2.0];
        let p = FixedPointProblem {
            sites: &s,
            base: &base,
            green: &g,
        };
        let f = Power {
            b: Coefficient::Constant(1.0),
            p: 3.0,
        };
        let (mut lo, mut hi) = (0.0f64, 2.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid - 2.0 + 3.0 * mid.powi(3) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        for name in ["picard", "newton", "picard-newton"] {
            let cfg = LadderConfig {
                inner: name.into(),
                ..Default::default()
            };
            let (u, rep) = solve_ladder(&p, &f, &cfg, &Default::default()).unwrap();
            assert!((u[0] - lo).abs() < 1e-10, "{name}: {} vs {lo}", u[0]);
            assert!(rep.monotonicity_violation < 1e-10);
        }
    }

    #[test]
    fn both_orders_agree() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 1.5]);
        let s = sites(2);
        let base = [-1.5, 2.5];
        let p = FixedPointProblem {
            sites: &s,
            base: &base,
            green: &g,
        };
        let f = Exponential {
            b: Coefficient::Constant(1.0),
        };
        let a = solve_ladder(&p, &f, &LadderConfig::default(), &Default::default()).unwrap();
        let cfg = LadderConfig {
            order: LadderOrder::UpperOuter,
            factor: 3.0,
            ..Default::default()
        };
        let b = solve_ladder(&p, &f, &cfg, &Default::default()).unwrap();
        assert!(max_diff(&a.0, &b.0) < 1e-9);
        assert!(a.1.residual < 1e-10 && b.1.residual < 1e-10);
    }

    #[test]
    fn unknown_inner_solver() {
        assert!(matches!(
            InnerSolverRegistry::default().get("gmres"),
            Err(Error::Unknown { .. })
        ));
    }

    #[test]
    fn too_short_ladder_reports_best_iterate() {
        let g = DMatrix::from_row_slice(1, 1, &[1.0]);
        let s = sites(1);
        let base = [-50.0];
        let p = FixedPointProblem {
            sites: &s,
            base: &base,
            green: &g,
        };
        let f = Power {
            b: Coefficient::Constant(1.0),
            p: 1.0,
        };
        let cfg = LadderConfig {
            max_levels: 3,
            ..Default::default()
        };
        match solve_ladder(&p, &f, &cfg, &Default::default()) {
            Err(Error::NotConverged { best, .. }) => assert_eq!(best.len(), 1),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
