//! Walk on spheres for the symmetric alpha-stable process on `(-1, 1)`.
//!
//! From the centre of an interval of radius `r` the process exits at
//! `x +- r rho` with a fair sign and `rho^{-2} ~ Beta(alpha/2, 1 - alpha/2)`,
//! which is the one-ball Poisson kernel. Each step uses the largest interval
//! centred at the current point inside `D`; the walk stops at the first
//! sample outside `D`. Jumps leave `D` with probability bounded below, so no
//! shrinking tolerance is needed.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::path_rng;
use crate::error::{Error, Result};
use crate::frac1d::{apply_pd, ContinuumSolution, ExteriorData, FracKernels, Grader, Point, Quadrature};
use crate::frac1d::quad::normalise_points;
use crate::nonlinearity::Site;
use crate::stats::{chi_square, ChiSquare, Estimate};

pub const STEP_CAP: usize = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WosPath {
    pub centers: Vec<f64>,
    /// `1 - |center|` at each step.
    pub radii: Vec<f64>,
    /// Expected time spent in each ball, `r^alpha E_0 tau`.
    pub mean_occupation: Vec<f64>,
    pub exit: f64,
    /// `|exit| - 1`, kept separately for data singular at the boundary.
    pub gap: f64,
}

impl WosPath {
    pub fn steps(&self) -> usize {
        self.centers.len()
    }
}

/// One-ball exit radius sampler: returns `(rho, rho - 1)`.
#[derive(Clone, Debug)]
pub struct BallExit {
    ga: Gamma<f64>,
    gb: Gamma<f64>,
}

impl BallExit {
    pub fn new(k: &FracKernels) -> Result<Self> {
        let mk = |s: f64| Gamma::new(s, 1.0).map_err(|e| Error::Invalid(e.to_string()));
        Ok(Self {
            ga: mk(k.a)?,
            gb: mk(1.0 - k.a)?,
        })
    }

    /// `V = X / (X + Y)` and `1 - V = Y / (X + Y)` from two gamma variables,
    /// so both tails keep full precision.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> (f64, f64) {
        loop {
            let x = self.ga.sample(rng);
            let y = self.gb.sample(rng);
            let s = x + y;
            if x > 0.0 && s.is_finite() {
                let (v, w) = (x / s, y / s);
                let sv = v.sqrt();
                return (1.0 / sv, w / (sv * (1.0 + sv)));
            }
        }
    }
}

/// Walk from `x` until the first exit from `D`.
pub fn wos_walk<R: Rng>(k: &FracKernels, sampler: &BallExit, x: f64, rng: &mut R) -> Result<WosPath> {
    if !(x.abs() < 1.0) {
        return Err(Error::Precondition(format!("walk must start inside D, got {x}")));
    }
    let e0 = k.mean_exit(0.0);
    let mut path = WosPath {
        centers: Vec::new(),
        radii: Vec::new(),
        mean_occupation: Vec::new(),
        exit: 0.0,
        gap: 0.0,
    };
    let (mut cur, mut r) = (x, 1.0 - x.abs());
    while path.centers.len() < STEP_CAP {
        path.centers.push(cur);
        path.radii.push(r);
        path.mean_occupation.push(r.powf(k.alpha) * e0);
        let (rho, rho_m1) = sampler.sample(rng);
        let toward = if cur >= 0.0 { 1.0 } else { -1.0 };
        let side = if rng.random_bool(0.5) { toward } else { -toward };
        let step = r * rho;
        if side == toward {
            path.exit = cur + side * step;
            path.gap = r * rho_m1;
            return Ok(path);
        }
        let mag = cur.abs();
        if step >= 1.0 + mag {
            path.exit = cur + side * step;
            path.gap = step - (1.0 + mag);
            return Ok(path);
        }
        if step <= mag {
            cur = toward * (mag - step);
            r += step;
        } else {
            cur = -toward * (step - mag);
            r = (1.0 + mag) - step;
        }
    }
    Err(Error::RunawayPath(STEP_CAP as u64))
}

pub fn wos_exit(k: &FracKernels, x: f64, seed: u64) -> Result<WosPath> {
    wos_walk(k, &BallExit::new(k)?, x, &mut path_rng(seed, 0))
}

/// Nodes `s_k` and weights `w_k G_D(0, s_k)` of the unit ball; one step adds
/// `r^alpha sum omega_k h(x + r s_k)` to an occupation integral.
#[derive(Clone, Debug)]
pub struct BallOccupation {
    pub nodes: Vec<f64>,
    pub omega: Vec<f64>,
    grader: Grader,
    centre: f64,
}

impl BallOccupation {
    pub fn new(k: &FracKernels, grader: &Grader) -> Self {
        // a log or weak kink at the centre is graded as a square-root
        // singularity, which absorbs it in the innermost substitution `y = d tau^10`
        let centre = k.diagonal_exponent().min(-0.9);
        let rule = grader.rule(&[
            Point::singular(-1.0, k.a),
            Point::singular(0.0, centre),
            Point::singular(1.0, k.a),
        ]);
        let (nodes, omega) = rule.iter().map(|(n, w)| (n.y, w * k.green_node(0.0, &n))).unzip();
        Self {
            nodes,
            omega,
            grader: grader.clone(),
            centre,
        }
    }

    pub fn default_for(k: &FracKernels) -> Self {
        Self::new(k, &Grader::new(8, 8))
    }

    /// `int_V G_V(c, y) h(y) dy` for `V = (c - r, c + r)`.
    pub fn integrate(&self, k: &FracKernels, c: f64, r: f64, h: impl Fn(f64) -> f64) -> f64 {
        r.powf(k.alpha)
            * self
                .nodes
                .iter()
                .zip(&self.omega)
                .map(|(s, w)| w * h(c + r * s))
                .sum::<f64>()
    }

    /// As [`Self::integrate`] for `h` singular at the points `kinks`; a
    /// fresh rule is graded toward each kink inside the ball.
    pub fn integrate_kinked(&self, k: &FracKernels, c: f64, r: f64, kinks: &[f64], h: impl Fn(f64) -> f64) -> f64 {
        let inside: Vec<Point> = kinks
            .iter()
            .map(|z| (z - c) / r)
            .filter(|s| s.abs() < 1.0)
            // milder than the centre grading, so `c + r s` never rounds onto the kink
            .map(|s| Point::singular(s, -0.8))
            .collect();
        if inside.is_empty() {
            return self.integrate(k, c, r, h);
        }
        let mut pts = vec![
            Point::singular(-1.0, k.a),
            Point::singular(0.0, self.centre),
            Point::singular(1.0, k.a),
        ];
        pts.extend(inside);
        let rule = self.grader.rule(&normalise_points(pts, -1.0, 1.0));
        r.powf(k.alpha) * rule.integrate_nodes(|n| k.green_node(0.0, &n) * h(c + r * n.y))
    }
}

/// A real functional of a walk; its mean is the estimated quantity.
pub trait WosFunctional: Send + Sync {
    fn name(&self) -> &'static str;
    fn evaluate(&self, path: &WosPath) -> Result<f64>;
}

fn exterior_value(g: &ExteriorData, path: &WosPath) -> Result<f64> {
    let v = g.eval(path.exit, path.gap);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Precondition(format!(
            "g is not finite at the exit point {} (gap {:e}); Poisson integrability fails",
            path.exit, path.gap
        )))
    }
}

/// `g(X_{tau_D})`.
pub struct WosExitValue {
    pub g: ExteriorData,
}

impl WosFunctional for WosExitValue {
    fn name(&self) -> &'static str {
        "PDg"
    }
    fn evaluate(&self, path: &WosPath) -> Result<f64> {
        exterior_value(&self.g, path)
    }
}

/// `sum_k r_k^alpha E_0 tau`, unbiased for `E_x tau_D`.
pub struct WosMeanExit;

impl WosFunctional for WosMeanExit {
    fn name(&self) -> &'static str {
        "mean_exit_time"
    }
    fn evaluate(&self, path: &WosPath) -> Result<f64> {
        Ok(path.mean_occupation.iter().sum())
    }
}

/// `u(x) - g(X_tau) - sum_k [int G_{B_k}(c_k, y) f(y, u(y)) dy + sum m G_{B_k}(c_k, z)]`.
pub struct WosFeynmanKac<'a> {
    pub solution: &'a ContinuumSolution,
    pub ball: BallOccupation,
}

impl WosFunctional for WosFeynmanKac<'_> {
    fn name(&self) -> &'static str {
        "FK_residual"
    }
    fn evaluate(&self, path: &WosPath) -> Result<f64> {
        let s = self.solution;
        let k = s.kernels();
        let p = &s.problem;
        let kinks: Vec<f64> = p.atoms.iter().map(|&(z, _)| z).collect();
        let mut integral = 0.0;
        for (&c, &r) in path.centers.iter().zip(&path.radii) {
            integral += self
                .ball
                .integrate_kinked(k, c, r, &kinks, |y| p.f.eval(Site::Point(y), s.eval(y)));
            for &(z, m) in &p.atoms {
                if (z - c).abs() < r {
                    integral += m * k.green_ball(c, r, c, z);
                }
            }
        }
        Ok(s.eval(path.centers[0]) - exterior_value(&p.g, path)? - integral)
    }
}

/// Inputs from which an estimator kind is built.
#[derive(Clone, Default)]
pub struct WosData<'a> {
    pub g: Option<&'a ExteriorData>,
    pub solution: Option<&'a ContinuumSolution>,
}

type WosBuilder = for<'a> fn(&FracKernels, &WosData<'a>) -> Result<Box<dyn WosFunctional + 'a>>;

fn missing(name: &str) -> Error {
    Error::Invalid(format!("estimator input `{name}` missing"))
}

/// Walk-on-spheres estimator kinds by name.
pub struct WosRegistry {
    builders: BTreeMap<&'static str, WosBuilder>,
}

fn build_pdg<'a>(_: &FracKernels, d: &WosData<'a>) -> Result<Box<dyn WosFunctional + 'a>> {
    let g = d.g.ok_or_else(|| missing("g"))?;
    g.validate()?;
    Ok(Box::new(WosExitValue { g: g.clone() }))
}

fn build_mean_exit<'a>(_: &FracKernels, _: &WosData<'a>) -> Result<Box<dyn WosFunctional + 'a>> {
    Ok(Box::new(WosMeanExit))
}

fn build_fk<'a>(_: &FracKernels, d: &WosData<'a>) -> Result<Box<dyn WosFunctional + 'a>> {
    let s = d.solution.ok_or_else(|| missing("solution"))?;
    if s.problem.has_martin() {
        return Err(Error::Precondition(
            "the Feynman-Kac residual does not cover Martin boundary data".into(),
        ));
    }
    Ok(Box::new(WosFeynmanKac {
        solution: s,
        ball: BallOccupation::default_for(s.kernels()),
    }))
}

impl Default for WosRegistry {
    fn default() -> Self {
        let mut builders: BTreeMap<&'static str, WosBuilder> = BTreeMap::new();
        builders.insert("PDg", build_pdg);
        builders.insert("mean_exit_time", build_mean_exit);
        builders.insert("FK_residual", build_fk);
        Self { builders }
    }
}

impl WosRegistry {
    pub fn register(&mut self, name: &'static str, builder: WosBuilder) {
        self.builders.insert(name, builder);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.builders.keys().copied().collect()
    }

    pub fn build<'a>(&self, kind: &str, k: &FracKernels, data: &WosData<'a>) -> Result<Box<dyn WosFunctional + 'a>> {
        let b = self.builders.get(kind).ok_or_else(|| Error::Unknown {
            kind: "walk-on-spheres estimator",
            name: kind.to_string(),
        })?;
        b(k, data)
    }
}

/// Walks from `x`, one ChaCha stream per path.
pub fn walks(k: &FracKernels, x: f64, n_paths: usize, seed: u64) -> Result<Vec<WosPath>> {
    let sampler = BallExit::new(k)?;
    (0..n_paths as u64)
        .into_par_iter()
        .map(|i| wos_walk(k, &sampler, x, &mut path_rng(seed, i)))
        .collect()
}

/// Mean and standard error of `functional` over `n_paths` walks from `x`.
pub fn estimate(
    k: &FracKernels,
    functional: &dyn WosFunctional,
    x: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Estimate> {
    if n_paths < 100 {
        return Err(Error::Precondition("at least 100 paths are required".into()));
    }
    let sampler = BallExit::new(k)?;
    let samples: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let p = wos_walk(k, &sampler, x, &mut path_rng(seed, i))?;
            functional.evaluate(&p)
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&samples))
}

pub fn wos_estimate(
    kind: &str,
    k: &FracKernels,
    data: &WosData<'_>,
    x: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Estimate> {
    let functional = WosRegistry::default().build(kind, k, data)?;
    estimate(k, functional.as_ref(), x, n_paths, seed)
}

/// Right-hand exterior bin edges; the left bins mirror them.
pub fn exit_bin_edges() -> Vec<f64> {
    vec![1.0, 1.001, 1.01, 1.03, 1.1, 1.2, 1.4, 1.7, 2.0, 3.0, 5.0, 10.0, 100.0, f64::INFINITY]
}

#[derive(Clone, Debug, Serialize)]
pub struct ExitLawReport {
    pub x: f64,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub probs: Vec<f64>,
    pub chi_square: ChiSquare,
}

/// Exit points of walks from `x` binned on both half-lines and tested
/// against bin masses of the quadrature Poisson kernel.
pub fn exit_law_test(k: &FracKernels, q: &Quadrature, x: f64, n_paths: usize, seed: u64) -> Result<ExitLawReport> {
    let edges = exit_bin_edges();
    let nb = edges.len() - 1;
    let mut probs = Vec::with_capacity(2 * nb);
    for side in [-1.0, 1.0] {
        for b in edges.windows(2) {
            let (lo, hi) = if side > 0.0 { (b[0], b[1]) } else { (-b[1], -b[0]) };
            probs.push(apply_pd(k, q, &ExteriorData::Indicator { lo, hi }, x)?.value);
        }
    }
    let mut counts = vec![0u64; 2 * nb];
    for p in walks(k, x, n_paths, seed)? {
        let mag = 1.0 + p.gap;
        let bin = edges.partition_point(|&e| e <= mag).clamp(1, nb) - 1;
        let offset = if p.exit > 0.0 { nb } else { 0 };
        counts[offset + bin] += 1;
    }
    let chi = chi_square(&counts, &probs)?;
    Ok(ExitLawReport {
        x,
        edges,
        counts,
        probs,
        chi_square: chi,
    })
}

/// `P(exit D in one step)` from `x`: the one-ball Poisson mass outside `D`,
/// by quadrature over the far side.
pub fn one_step_exit_probability(k: &FracKernels, grader: &Grader, x: f64) -> f64 {
    let r = 1.0 - x.abs();
    if r >= 1.0 {
        return 1.0;
    }
    let toward = if x >= 0.0 { 1.0 } else { -1.0 };
    // near side: all of it lies outside D
    let near = 0.5;
    // far side beyond -toward: y = -toward (1 + s), s > 0
    let far = k
        .exterior_rule(grader, &[], k.a)
        .integrate_nodes(|n| {
            let t = n.y;
            let y = -toward / t;
            k.poisson_ball(x, r, x, y) / (t * t)
        });
    near + far
}

/// Empirical frequency of one-step exits.
pub fn one_step_frequency(k: &FracKernels, x: f64, n_paths: usize, seed: u64) -> Result<Estimate> {
    let samples: Vec<f64> = walks(k, x, n_paths, seed)?
        .iter()
        .map(|p| if p.steps() == 1 { 1.0 } else { 0.0 })
        .collect();
    Ok(Estimate::from_samples(&samples))
}
