//! The semilinear Dirichlet problem on the graph backend and every check of
//! its solution: probabilistic fixed point, projective variational form,
//! comparison, a-priori and stability bounds, `V^D`-weak and very weak forms.
//!
//! The unknown is a full state vector; on `D^c` it equals `g` exactly and on
//! `D` it solves `u = P_D g + R^D f(., u) + R^D mu`.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed_point::{solve_ladder, FixedPointProblem, InnerSolverRegistry, LadderConfig, LadderReport};
use crate::form::{DiscreteForm, FunctionVector, NodeSet, SignedMeasure};
use crate::nonlinearity::{check_monotone, default_probe_values, Nonlinearity, Shifted, Site};
use crate::potential::{is_excessive, GreenOperator};
use crate::projection::{harmonic_boundary_from, poisson_kernel_with, project_with, SubsetSolver};

#[derive(Clone)]
pub struct GraphProblem {
    pub form: DiscreteForm,
    pub domain: NodeSet,
    pub g: FunctionVector,
    pub mu: SignedMeasure,
    pub f: Arc<dyn Nonlinearity>,
    /// Increasing subsets of `D` ending at `D`.
    pub nest: Vec<NodeSet>,
    pub ladder: LadderConfig,
}

impl std::fmt::Debug for GraphProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GraphProblem")
            .field("n", &self.form.n())
            .field("domain", &self.domain)
            .field("f", &self.f.name())
            .finish()
    }
}

impl GraphProblem {
    pub fn new(
        form: DiscreteForm,
        domain: NodeSet,
        g: FunctionVector,
        mu: SignedMeasure,
        f: Arc<dyn Nonlinearity>,
    ) -> Result<Self> {
        let n = form.n();
        if domain.universe() != n {
            return Err(Error::Dimension {
                expected: n,
                got: domain.universe(),
            });
        }
        g.check_len(n)?;
        mu.check_len(n)?;
        if !g.is_finite() || !mu.is_finite() {
            return Err(Error::Invalid("g and mu must be finite".into()));
        }
        form.require_transient(&domain)?;
        let nest = vec![domain.clone()];
        Ok(Self {
            form,
            domain,
            g,
            mu,
            f,
            nest,
            ladder: LadderConfig::default(),
        })
    }

    pub fn with_nest(mut self, nest: Vec<NodeSet>) -> Result<Self> {
        let increasing = nest.windows(2).all(|w| w[0].is_subset(&w[1]));
        if nest.is_empty() || !increasing || nest.last() != Some(&self.domain) {
            return Err(Error::Invalid(
                "nest must be an increasing list of subsets ending at D".into(),
            ));
        }
        self.nest = nest;
        Ok(self)
    }

    pub fn with_ladder(mut self, ladder: LadderConfig) -> Self {
        self.ladder = ladder;
        self
    }

    pub fn with_f(mut self, f: Arc<dyn Nonlinearity>) -> Self {
        self.f = f;
        self
    }

    pub fn n(&self) -> usize {
        self.form.n()
    }

    pub fn sites(&self) -> Vec<Site> {
        self.domain.iter().map(|&x| Site::State(x)).collect()
    }

    /// `f(x, u(x))` on `D`, zero elsewhere.
    pub fn f_at(&self, u: &[f64]) -> FunctionVector {
        self.f_of(self.f.as_ref(), u)
    }

    fn f_of(&self, f: &dyn Nonlinearity, u: &[f64]) -> FunctionVector {
        let mut out = vec![0.0; self.n()];
        for &x in self.domain.iter() {
            out[x] = f.eval(Site::State(x), u[x]);
        }
        FunctionVector(out)
    }

    pub fn check_hypotheses(&self) -> Result<()> {
        check_monotone(self.f.as_ref(), &self.sites(), &default_probe_values())
    }

    pub(crate) fn context(&self) -> Result<Context<'_>> {
        Context::new(self)
    }
}

/// Factorisation of `K[D,D]` and the linear parts of the representation.
pub(crate) struct Context<'a> {
    pub problem: &'a GraphProblem,
    pub solver: SubsetSolver<'a>,
    /// `P_D g` on all states (equal to `g` on `D^c`).
    pub pdg: FunctionVector,
    pub rmu: FunctionVector,
}

impl<'a> Context<'a> {
    fn new(problem: &'a GraphProblem) -> Result<Self> {
        let solver = SubsetSolver::new(&problem.form, &problem.domain)?;
        let kernel = poisson_kernel_with(&solver);
        let pdg = kernel.apply(&problem.g);
        let rmu = solver.solve_extended(&problem.mu);
        Ok(Self {
            problem,
            solver,
            pdg,
            rmu,
        })
    }

    /// `R^D h` for a density `h`.
    pub fn green_density(&self, h: &[f64]) -> FunctionVector {
        let m = self.problem.form.m();
        let weighted: Vec<f64> = h.iter().zip(m).map(|(a, w)| a * w).collect();
        self.solver.solve_extended(&weighted)
    }

    pub fn green_measure(&self, mu: &[f64]) -> FunctionVector {
        self.solver.solve_extended(mu)
    }

    pub fn poisson(&self, g: &[f64]) -> FunctionVector {
        poisson_kernel_with(&self.solver).apply(g)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Solution {
    pub u: FunctionVector,
    pub ladder: LadderReport,
}

pub fn solve(problem: &GraphProblem) -> Result<Solution> {
    solve_with(problem, &InnerSolverRegistry::default())
}

pub fn solve_with(problem: &GraphProblem, registry: &InnerSolverRegistry) -> Result<Solution> {
    problem.check_hypotheses()?;
    let ctx = problem.context()?;
    solve_in(&ctx, problem.f.as_ref(), registry)
}

fn solve_in(ctx: &Context<'_>, f: &dyn Nonlinearity, registry: &InnerSolverRegistry) -> Result<Solution> {
    let p = ctx.problem;
    let green = GreenOperator::new(&p.form, &p.domain)?;
    let sites = p.sites();
    let base: Vec<f64> = p.domain.iter().map(|&x| ctx.pdg[x] + ctx.rmu[x]).collect();
    let fp = FixedPointProblem {
        sites: &sites,
        base: &base,
        green: green.matrix(),
    };
    let (inner, ladder) = solve_ladder(&fp, f, &p.ladder, registry)?;
    let mut u = p.g.clone();
    for (i, &x) in p.domain.iter().enumerate() {
        u[x] = inner[i];
    }
    Ok(Solution { u, ladder })
}

/// Solves `u = h + P_D g + R^D f(., u) + R^D mu` through `f_h(x, y) = f(x, h(x) + y)`.
pub fn solve_shifted(problem: &GraphProblem, h: &FunctionVector) -> Result<Solution> {
    h.check_len(problem.n())?;
    let shift = h.clone();
    let fh = Shifted {
        inner: problem.f.clone(),
        shift: Arc::new(move |s| match s {
            Site::State(x) => shift[x],
            Site::Point(_) => 0.0,
        }),
    };
    check_monotone(&fh, &problem.sites(), &default_probe_values())?;
    let ctx = problem.context()?;
    let mut sol = solve_in(&ctx, &fh, &InnerSolverRegistry::default())?;
    for (u, hv) in sol.u.iter_mut().zip(h.iter()) {
        *u += hv;
    }
    Ok(sol)
}

/// `max_D |u - h - P_D g - R^D f(., u) - R^D mu| + max_{D^c} |u - h - g|`.
pub fn shifted_residual(problem: &GraphProblem, h: &FunctionVector, u: &FunctionVector) -> Result<f64> {
    let w: Vec<f64> = u.iter().zip(h.iter()).map(|(a, b)| a - b).collect();
    let ctx = problem.context()?;
    let rf = ctx.green_density(&problem.f_at(u));
    let (mut inside, mut outside) = (0.0f64, 0.0f64);
    for x in 0..problem.n() {
        if problem.domain.contains(x) {
            inside = inside.max((w[x] - ctx.pdg[x] - rf[x] - ctx.rmu[x]).abs());
        } else {
            outside = outside.max((w[x] - problem.g[x]).abs());
        }
    }
    Ok(inside + outside)
}

pub fn residual_probabilistic(problem: &GraphProblem, u: &FunctionVector) -> Result<f64> {
    u.check_len(problem.n())?;
    shifted_residual(problem, &FunctionVector::zeros(problem.n()), u)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProjectiveReport {
    /// Variational defect of `Pi_{V_n}(u)` over the nest and `F(V_n)` basis.
    pub variational: f64,
    /// `max |u - g|` on the harmonic boundary.
    pub boundary: f64,
    /// `max_D |P_{V_N}(u) - P_D(g)|` at the deepest level.
    pub limit: f64,
}

impl ProjectiveReport {
    pub fn max(&self) -> f64 {
        self.variational.max(self.boundary).max(self.limit)
    }
}

pub fn verify_projective(problem: &GraphProblem, u: &FunctionVector) -> Result<ProjectiveReport> {
    u.check_len(problem.n())?;
    let form = &problem.form;
    let k = form.energy_matrix();
    let fu = problem.f_at(u);
    let mut report = ProjectiveReport::default();
    let mut deepest = None;
    for level in &problem.nest {
        let solver = SubsetSolver::new(form, level)?;
        let kernel = poisson_kernel_with(&solver);
        let pu = kernel.apply(u);
        let pi: Vec<f64> = u.iter().zip(pu.iter()).map(|(a, b)| a - b).collect();
        for &x in level.iter() {
            let e: f64 = (0..problem.n()).map(|y| k[(x, y)] * pi[y]).sum();
            let defect = e - fu[x] * form.m()[x] - problem.mu[x];
            report.variational = report.variational.max(defect.abs());
        }
        deepest = Some(pu);
    }
    let ctx = problem.context()?;
    let kernel = poisson_kernel_with(&ctx.solver);
    let carrier = harmonic_boundary_from(&kernel, form.m());
    for &y in carrier.iter() {
        report.boundary = report.boundary.max((u[y] - problem.g[y]).abs());
    }
    let pu = deepest.expect("nest is nonempty");
    for &x in problem.domain.iter() {
        report.limit = report.limit.max((pu[x] - ctx.pdg[x]).abs());
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Comparison {
    pub holds: bool,
    /// `max_D (u1 - u2)^+`.
    pub violation: f64,
    pub u1: FunctionVector,
    pub u2: FunctionVector,
}

fn same_setting(p1: &GraphProblem, p2: &GraphProblem) -> Result<()> {
    if p1.domain != p2.domain
        || p1.form.m() != p2.form.m()
        || p1.form.kappa() != p2.form.kappa()
        || p1.form.jump() != p2.form.jump()
    {
        return Err(Error::Precondition("problems must share the form and D".into()));
    }
    Ok(())
}

/// Solves both problems and checks `u1 <= u2` on `D` after verifying the
/// ordering hypotheses on the data.
pub fn compare(p1: &GraphProblem, p2: &GraphProblem) -> Result<Comparison> {
    same_setting(p1, p2)?;
    if p1.domain.iter().any(|&x| p1.mu[x] > p2.mu[x]) {
        return Err(Error::Precondition("mu1 <= mu2 fails".into()));
    }
    let ctx = p1.context()?;
    let carrier = harmonic_boundary_from(&poisson_kernel_with(&ctx.solver), p1.form.m());
    if carrier.iter().any(|&y| p1.g[y] > p2.g[y]) {
        return Err(Error::Precondition("g1 <= g2 fails on the harmonic boundary".into()));
    }
    let s1 = solve(p1)?;
    let s2 = solve(p2)?;
    let ordered_at = |u: &FunctionVector| {
        p1.domain.iter().all(|&x| {
            let s = Site::State(x);
            p1.f.eval(s, u[x]) <= p2.f.eval(s, u[x])
        })
    };
    if !ordered_at(&s2.u) && !ordered_at(&s1.u) {
        return Err(Error::Precondition(
            "neither f1(., u2) <= f2(., u2) nor f1(., u1) <= f2(., u1)".into(),
        ));
    }
    let violation = p1
        .domain
        .iter()
        .fold(0.0f64, |v, &x| v.max(s1.u[x] - s2.u[x]));
    Ok(Comparison {
        holds: violation <= 1e-9,
        violation,
        u1: s1.u,
        u2: s2.u,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct AprioriReport {
    /// `min_D` of rhs - lhs in `|u| + R|f(u)| <= 2R|f(0)| + R|mu| + P|g|`.
    pub pointwise: f64,
    /// Same with the `P_D g` shift.
    pub shifted: f64,
    /// rhs - lhs of the `rho`-weighted bound, minimised over the weights.
    pub weighted: f64,
}

impl AprioriReport {
    pub fn min_slack(&self) -> f64 {
        self.pointwise.min(self.shifted).min(self.weighted)
    }
}

/// Excessive weights for the weighted bound: `1` when excessive, and the
/// normalised `R^D 1`.
pub fn default_weights(problem: &GraphProblem) -> Result<Vec<FunctionVector>> {
    let n = problem.n();
    let mut out = Vec::new();
    let one = FunctionVector::indicator(n, &problem.domain);
    if is_excessive(&problem.form, &problem.domain, &one) {
        out.push(one.clone());
    }
    let ctx = problem.context()?;
    let r1 = ctx.green_density(&one);
    let top = r1.max_abs();
    if top > 0.0 {
        out.push(FunctionVector(r1.iter().map(|v| v / top).collect()));
    }
    Ok(out)
}

pub fn apriori_report(
    problem: &GraphProblem,
    u: &FunctionVector,
    weights: &[FunctionVector],
) -> Result<AprioriReport> {
    u.check_len(problem.n())?;
    let n = problem.n();
    let ctx = problem.context()?;
    let abs_mu: Vec<f64> = problem.mu.iter().map(|v| v.abs()).collect();
    let abs_g: Vec<f64> = problem.g.iter().map(|v| v.abs()).collect();
    let fu = problem.f_at(u).abs();
    let f0 = problem.f_at(&vec![0.0; n]).abs();
    let fpg = problem.f_at(&ctx.pdg).abs();
    let r_fu = ctx.green_density(&fu);
    let r_f0 = ctx.green_density(&f0);
    let r_fpg = ctx.green_density(&fpg);
    let r_mu = ctx.green_measure(&abs_mu);
    let p_g = ctx.poisson(&abs_g);
    let mut report = AprioriReport {
        pointwise: f64::INFINITY,
        shifted: f64::INFINITY,
        weighted: f64::INFINITY,
    };
    for &x in problem.domain.iter() {
        let lhs = u[x].abs() + r_fu[x];
        let rhs = 2.0 * r_f0[x] + r_mu[x] + p_g[x];
        report.pointwise = report.pointwise.min(rhs - lhs);
        let lhs = (u[x] - ctx.pdg[x]).abs() + r_fu[x];
        let rhs = 2.0 * r_fpg[x] + r_mu[x];
        report.shifted = report.shifted.min(rhs - lhs);
    }
    let m = problem.form.m();
    for rho in weights {
        rho.check_len(n)?;
        if !is_excessive(&problem.form, &problem.domain, rho) {
            return Err(Error::Precondition("weight is not excessive on D".into()));
        }
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for &x in problem.domain.iter() {
            lhs += fu[x] * rho[x] * m[x];
            rhs += 2.0 * fpg[x] * rho[x] * m[x] + rho[x] * abs_mu[x];
        }
        report.weighted = report.weighted.min(rhs - lhs);
    }
    if report.pointwise.is_infinite() {
        report.pointwise = 0.0;
        report.shifted = 0.0;
    }
    if report.weighted.is_infinite() {
        report.weighted = 0.0;
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    /// `min_D` of bound minus `|u1 - u2|`.
    pub slack: f64,
    /// The strengthened bound, when both problems share `f`.
    pub shared_f_slack: Option<f64>,
}

pub fn stability_gap(
    p1: &GraphProblem,
    u1: &FunctionVector,
    p2: &GraphProblem,
    u2: &FunctionVector,
) -> Result<StabilityReport> {
    same_setting(p1, p2)?;
    let ctx = p1.context()?;
    let f1u1 = p1.f_at(u1);
    let f2u1 = p2.f_at(u1);
    let df: Vec<f64> = f1u1.iter().zip(f2u1.iter()).map(|(a, b)| (a - b).abs()).collect();
    let dmu: Vec<f64> = p1.mu.iter().zip(p2.mu.iter()).map(|(a, b)| (a - b).abs()).collect();
    let dg: Vec<f64> = p1.g.iter().zip(p2.g.iter()).map(|(a, b)| (a - b).abs()).collect();
    let r_df = ctx.green_density(&df);
    let r_mu = ctx.green_measure(&dmu);
    let p_g = ctx.poisson(&dg);
    let shared = Arc::ptr_eq(&p1.f, &p2.f);
    let r_dfu = if shared {
        let f1u2 = p1.f_at(u2);
        let d: Vec<f64> = f1u1.iter().zip(f1u2.iter()).map(|(a, b)| (a - b).abs()).collect();
        Some(ctx.green_density(&d))
    } else {
        None
    };
    let mut slack = f64::INFINITY;
    let mut shared_slack = f64::INFINITY;
    for &x in p1.domain.iter() {
        let diff = (u1[x] - u2[x]).abs();
        slack = slack.min(r_df[x] + r_mu[x] + p_g[x] - diff);
        if let Some(r) = &r_dfu {
            shared_slack = shared_slack.min(r_mu[x] + p_g[x] - diff - r[x]);
        }
    }
    let fix = |v: f64| if v.is_infinite() { 0.0 } else { v };
    Ok(StabilityReport {
        slack: fix(slack),
        shared_f_slack: r_dfu.map(|_| fix(shared_slack)),
    })
}

/// `max_{x in D} |-sum_y u(y) (L e_x)(y) m(y) - mu(x) - f(x, u(x)) m(x)|`.
pub fn very_weak_defect(problem: &GraphProblem, u: &FunctionVector) -> Result<f64> {
    u.check_len(problem.n())?;
    let l = problem.form.generator();
    let m = problem.form.m();
    let fu = problem.f_at(u);
    let mut worst = 0.0f64;
    for &x in problem.domain.iter() {
        let lhs: f64 = -(0..problem.n()).map(|y| u[y] * l[(y, x)] * m[y]).sum::<f64>();
        let rhs = problem.mu[x] + fu[x] * m[x];
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// `max_{x in D} |sum_y P_D(h)(y) (L e_x)(y) m(y)|` for a bounded `h`.
pub fn harmonic_annihilation_defect(problem: &GraphProblem, h: &FunctionVector) -> Result<f64> {
    h.check_len(problem.n())?;
    let ctx = problem.context()?;
    let ph = ctx.poisson(h);
    let l = problem.form.generator();
    let m = problem.form.m();
    Ok(problem.domain.iter().fold(0.0f64, |w, &x| {
        let s: f64 = (0..problem.n()).map(|y| ph[y] * l[(y, x)] * m[y]).sum();
        w.max(s.abs())
    }))
}

/// Jump energy over pairs with at least one end in `D`.
pub fn vd_energy(form: &DiscreteForm, domain: &NodeSet, u: &[f64], v: &[f64]) -> f64 {
    let j = form.jump();
    let inside = domain.mask();
    let n = form.n();
    let mut s = 0.0;
    for x in 0..n {
        for y in 0..n {
            if (inside[x] || inside[y]) && j[(x, y)] > 0.0 {
                s += (u[x] - u[y]) * (v[x] - v[y]) * j[(x, y)];
            }
        }
    }
    s
}

/// `sup { <mu, eta> : E(eta, eta) <= 1, eta in F(D) } = sqrt(mu^T K_DD^{-1} mu)`.
pub fn dual_norm(form: &DiscreteForm, domain: &NodeSet, mu: &SignedMeasure) -> Result<f64> {
    let solver = SubsetSolver::new(form, domain)?;
    let r = solver.solve_extended(mu);
    let q: f64 = domain.iter().map(|&x| mu[x] * r[x]).sum();
    Ok(q.max(0.0).sqrt())
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VdReport {
    /// `max_D |E(u - P_D g, e_x) - mu(x)|`.
    pub identity: f64,
    /// `||P_D g||_{V^D} + ||mu||_{F*(D)} - ||u||_{V^D}`.
    pub bound_slack: f64,
    /// `||g||_{V^D} - ||P_D g||_{V^D}`.
    pub extension_slack: f64,
    pub dual_norm: f64,
}

pub fn vd_check(problem: &GraphProblem, u: &FunctionVector) -> Result<VdReport> {
    u.check_len(problem.n())?;
    if problem.form.kappa().iter().any(|&k| k != 0.0) {
        return Err(Error::Precondition("the V^D check needs a killing-free form".into()));
    }
    let sites = problem.sites();
    let vanishes = sites
        .iter()
        .all(|&s| default_probe_values().iter().all(|&y| problem.f.eval(s, y) == 0.0));
    if !vanishes {
        return Err(Error::Precondition("the V^D check needs f = 0".into()));
    }
    let ctx = problem.context()?;
    let k = problem.form.energy_matrix();
    let w: Vec<f64> = u.iter().zip(ctx.pdg.iter()).map(|(a, b)| a - b).collect();
    let identity = problem.domain.iter().fold(0.0f64, |acc, &x| {
        let e: f64 = (0..problem.n()).map(|y| k[(x, y)] * w[y]).sum();
        acc.max((e - problem.mu[x]).abs())
    });
    let norm = |v: &[f64]| vd_energy(&problem.form, &problem.domain, v, v).max(0.0).sqrt();
    let dual = dual_norm(&problem.form, &problem.domain, &problem.mu)?;
    Ok(VdReport {
        identity,
        bound_slack: norm(&ctx.pdg) + dual - norm(u),
        extension_slack: norm(&problem.g) - norm(&ctx.pdg),
        dual_norm: dual,
    })
}

/// `E(Pi_D(w), T_1(Pi_D(w)))` for `w = u1 - u2`, with `T_1` the clamp to `[-1, 1]`.
pub fn clamp_certificate(
    form: &DiscreteForm,
    domain: &NodeSet,
    u1: &FunctionVector,
    u2: &FunctionVector,
) -> Result<f64> {
    u1.check_len(form.n())?;
    u2.check_len(form.n())?;
    let solver = SubsetSolver::new(form, domain)?;
    let w: Vec<f64> = u1.iter().zip(u2.iter()).map(|(a, b)| a - b).collect();
    let pi = project_with(&solver, &w);
    let clamped: Vec<f64> = pi.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    form.energy(&pi, &clamped)
}

/// Dense `R^D` on `D` acting on densities, for callers that need the matrix.
pub fn green_matrix(problem: &GraphProblem) -> Result<DMatrix<f64>> {
    Ok(GreenOperator::new(&problem.form, &problem.domain)?.matrix().clone())
}
