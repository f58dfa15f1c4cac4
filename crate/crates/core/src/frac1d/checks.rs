//! Checks of continuum solutions along the interval nest
//! `V_n = (-1 + 2^{-n}, 1 - 2^{-n})`: exit integrals `P_{V_n}`, the boundary
//! trace, the double-integral trace measure, nested Dynkin and the weighted
//! norm estimate.

use serde::Serialize;

use super::exterior::ExteriorData;
use super::kernels::FracKernels;
use super::quad::{normalise_points, Grader, Node, Point};
use super::solve::ContinuumSolution;
use crate::error::{Error, Result};
use crate::nonlinearity::Site;
use crate::trace::{Tail, TraceSequence};

pub const NEST_DEPTH: usize = 12;

pub fn nest_radius(n: usize) -> f64 {
    1.0 - 0.5f64.powi(n as i32)
}

pub fn trace_probes() -> Vec<f64> {
    vec![-0.9, -0.5, 0.0, 0.5, 0.9]
}

/// `P_V phi(x)` for `V = (-r, r)`: `inside` on the shell `r < |y| < 1`
/// (power exponent `inside_edge` at `+-1`, further singular points in
/// `kinks`) and `outside` beyond.
#[allow(clippy::too_many_arguments)]
pub fn exit_integral(
    k: &FracKernels,
    grader: &Grader,
    r: f64,
    x: f64,
    inside: &dyn Fn(&Node) -> f64,
    inside_edge: f64,
    kinks: &[Point],
    outside: Option<&ExteriorData>,
) -> f64 {
    if x.abs() >= r {
        return if x.abs() < 1.0 {
            // outside V the exit law is the point mass at x
            inside(&Node {
                y: x,
                anchor: x,
                off: 0.0,
            })
        } else {
            outside.map_or(0.0, |g| g.at(x))
        };
    }
    let edge = inside_edge.max(-0.999);
    let mut total = 0.0;
    if r < 1.0 {
        for (lo, hi) in [(r, 1.0), (-1.0, -r)] {
            let mut pts = vec![Point::singular(r, -k.a), Point::singular(-r, -k.a)];
            pts.extend([Point::singular(1.0, edge), Point::singular(-1.0, edge)]);
            pts.extend(kinks.iter().filter(|p| p.x > lo && p.x < hi));
            let pts = normalise_points(pts, lo, hi);
            total += grader.integrate_nodes(&pts, |n| {
                let v = inside(&n);
                if v == 0.0 {
                    0.0
                } else {
                    k.poisson_ball_node(0.0, r, x, &n) * v
                }
            });
        }
    }
    if let Some(g) = outside.filter(|g| !g.is_zero()) {
        let e = g.endpoint_exponent().min(0.0).max(-0.999 + k.a);
        // P_V is smooth at the endpoints of D unless V = D
        let rule = k.exterior_rule(grader, &g.breaks(), if r < 1.0 { e + k.a } else { e });
        total += rule.integrate_nodes(|n| {
            let t = n.y;
            let gap = n.gap_to(1.0) / t;
            let y = 1.0 / t;
            (k.poisson_ball(0.0, r, x, y) * g.eval(y, gap) + k.poisson_ball(0.0, r, x, -y) * g.eval(-y, gap))
                / (t * t)
        });
    }
    total
}

/// Atoms of a solution as singular points of `u`.
pub fn atom_points(sol: &ContinuumSolution) -> Vec<Point> {
    let e = sol.kernels().diagonal_exponent();
    sol.problem.atoms.iter().map(|&(z, _)| Point::singular(z, e)).collect()
}

/// Power exponent of `|u|` at `+-1` for a solution: Martin data give
/// `alpha/2 - 1`, singular exterior data their own exponent.
pub fn edge_exponent(sol: &ContinuumSolution) -> f64 {
    let mut e = 0.0f64;
    if sol.problem.has_martin() {
        e = e.min(sol.kernels().a - 1.0);
    }
    e.min(sol.problem.g.endpoint_exponent())
}

/// `w_n(x) = P_{V_n}(|u| R^D kappa_D)(x)` with `R^D kappa_D = 1` on the
/// interval, for `n = 1..=depth`.
///
/// For `u` bounded at the endpoints, `w_n` is the exit mass of `V_n` into a
/// shell of width `2^{-n}`, where the Poisson kernel of `V_n` has its edge
/// singularity `s^{-alpha/2}`; the tail is then
/// `c_1 h^{1 - alpha/2} + c_2 h^{2 - alpha/2} + ...` and is extrapolated by
/// Richardson. Otherwise (Martin data, singular exterior data) the rate is
/// not known and Aitken is used.
pub fn trace_sequence(
    sol: &ContinuumSolution,
    grader: &Grader,
    depth: usize,
    probes: &[f64],
) -> Result<TraceSequence> {
    if depth == 0 {
        return Err(Error::Invalid("trace sequence needs a nonempty nest".into()));
    }
    let k = sol.kernels();
    let edge = edge_exponent(sol);
    let kinks = atom_points(sol);
    let abs_u = |n: &Node| sol.eval_node(n).abs();
    let values: Vec<Vec<f64>> = probes
        .iter()
        .map(|&x| {
            (1..=depth)
                .map(|n| exit_integral(k, grader, nest_radius(n), x, &abs_u, edge, &kinks, None))
                .collect()
        })
        .collect();
    let tail = if edge == 0.0 {
        Tail::Richardson(vec![1.0 - k.a, 2.0 - k.a])
    } else {
        Tail::Aitken
    };
    Ok(TraceSequence::from_values(
        probes.iter().map(|x| format!("{x}")).collect(),
        (1..=depth).collect(),
        values,
        tail,
    ))
}

/// `max_x |P_{V_n} u(x) - P_D g(x) - M_D nu(x)|` over the probes, per nest
/// level.
pub fn projective_limit_sequence(
    sol: &ContinuumSolution,
    grader: &Grader,
    depth: usize,
    probes: &[f64],
) -> Result<Vec<f64>> {
    let k = sol.kernels();
    let edge = edge_exponent(sol);
    let kinks = atom_points(sol);
    let u = |n: &Node| sol.eval_node(n);
    let q = super::ops::Quadrature::default();
    let pdg: Vec<f64> = probes
        .iter()
        .map(|&x| super::ops::apply_pd(k, &q, &sol.problem.g, x).map(|v| v.value + sol.problem.martin_part(x)))
        .collect::<Result<_>>()?;
    Ok((1..=depth)
        .map(|n| {
            let r = nest_radius(n);
            probes
                .iter()
                .zip(&pdg)
                .filter(|(x, _)| x.abs() < r)
                .map(|(&x, p)| (exit_integral(k, grader, r, x, &u, edge, &kinks, Some(&sol.problem.g)) - p).abs())
                .fold(0.0, f64::max)
        })
        .collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct EtaReport {
    /// `int_V G_V(x0, z) int_{D \ V} j(|z - y|) u(y) dy dz`.
    pub double_integral: f64,
    /// `P_V(1_D u)(x0)`.
    pub kernel_formula: f64,
    /// Double integral at increasing grading depth.
    pub refinement: Vec<f64>,
}

impl EtaReport {
    pub fn defect(&self) -> f64 {
        (self.double_integral - self.kernel_formula).abs()
    }
}

fn node_distance(a: &Node, b: &Node) -> f64 {
    if a.anchor == b.anchor {
        (a.off - b.off).abs()
    } else {
        (a.y - b.y).abs()
    }
}

fn eta_double_integral(
    k: &FracKernels,
    grader: &Grader,
    r: f64,
    x0: f64,
    u: &dyn Fn(&Node) -> f64,
    u_edge: f64,
) -> f64 {
    let edge = u_edge.max(-0.999);
    let outer = grader.rule(&super::quad::normalise_points(
        vec![
            Point::singular(-r, -k.a),
            Point::singular(x0, k.diagonal_exponent()),
            Point::singular(r, -k.a),
        ],
        -r,
        r,
    ));
    outer.integrate_nodes(|z| {
        let gv = k.green_ball_node(0.0, r, x0, &z);
        if gv == 0.0 {
            return 0.0;
        }
        // grade the shell integral deep enough to see the distance to z
        let e = z.gap_to(r).min(z.gap_to(-r)).max(1e-300);
        let need = ((1.0 - r) / e).log2().max(0.0).ceil() as usize + 8;
        let inner = grader.with_levels(grader.levels.max(need));
        let psi: f64 = [
            [Point::singular(r, 0.0), Point::singular(1.0, edge)],
            [Point::singular(-1.0, edge), Point::singular(-r, 0.0)],
        ]
        .iter()
        .map(|pts| {
            inner.integrate_nodes(pts, |y| {
                let v = u(&y);
                if v == 0.0 {
                    0.0
                } else {
                    k.jump(node_distance(&y, &z)) * v
                }
            })
        })
        .sum();
        gv * psi
    })
}

/// The trace measure `eta_V[u]` of `V = (-r, r)` from the base point `x0`,
/// cross-checked against the kernel formula.
pub fn eta_measure(
    k: &FracKernels,
    grader: &Grader,
    r: f64,
    x0: f64,
    u: &dyn Fn(&Node) -> f64,
    u_edge: f64,
) -> EtaReport {
    let refinement: Vec<f64> = [grader.levels / 2, grader.levels]
        .iter()
        .map(|&l| eta_double_integral(k, &grader.with_levels(l), r, x0, u, u_edge))
        .collect();
    EtaReport {
        double_integral: *refinement.last().unwrap_or(&0.0),
        kernel_formula: exit_integral(k, grader, r, x0, u, u_edge, &[], None),
        refinement,
    }
}

/// `|Pi_V(R^D mu)(x) - R^V mu(x)|` for `V = (-r, r)` and
/// `mu = sum m_k delta_{z_k} + c dx` with atoms inside `V`.
pub fn dynkin_interval_defect(
    k: &FracKernels,
    grader: &Grader,
    r: f64,
    atoms: &[(f64, f64)],
    density: f64,
    x: f64,
) -> Result<f64> {
    if atoms.iter().any(|(z, _)| z.abs() >= r) || x.abs() >= r {
        return Err(Error::Precondition("atoms and probe must lie inside V".into()));
    }
    let rd_node = |n: &Node| -> f64 {
        atoms.iter().map(|&(z, m)| m * k.green_node(z, n)).sum::<f64>() + density * k.mean_exit_node(n)
    };
    let rd_x: f64 = atoms.iter().map(|&(z, m)| m * k.green(x, z)).sum::<f64>() + density * k.mean_exit(x);
    let pv = exit_integral(k, grader, r, x, &rd_node, k.a, &[], None);
    let rv: f64 = atoms.iter().map(|&(z, m)| m * k.green_ball(0.0, r, x, z)).sum::<f64>()
        + density * k.mean_exit_ball(0.0, r, x);
    Ok((rd_x - pv - rv).abs())
}

#[derive(Clone, Debug, Serialize)]
pub struct WeightedNorms {
    pub u_l1: f64,
    pub f_weighted: f64,
    pub f0_weighted: f64,
    pub atoms_weighted: f64,
    pub exterior_weighted: f64,
}

impl WeightedNorms {
    pub fn lhs(&self) -> f64 {
        self.u_l1 + self.f_weighted
    }

    pub fn rhs(&self) -> f64 {
        self.f0_weighted + self.atoms_weighted + self.exterior_weighted
    }

    /// `lhs / rhs`, 0 for zero data.
    pub fn ratio(&self) -> f64 {
        let (l, r) = (self.lhs(), self.rhs());
        if l == 0.0 {
            0.0
        } else if r == 0.0 {
            f64::INFINITY
        } else {
            l / r
        }
    }
}

/// Weighted norms with `delta = dist(., D^c)`: `||u||_1 + ||f(u)||_{1, delta^{a}}`
/// against `||f(0)||_{1, delta^a} + sum |m_k| delta(z_k)^a +
/// int_{D^c} |g| min(delta^{-a}, delta^{-alpha-1})`.
pub fn weighted_norms(sol: &ContinuumSolution, grader: &Grader) -> WeightedNorms {
    let k = sol.kernels();
    let p = &sol.problem;
    let grid = &sol.grid;
    let delta_a: Vec<f64> = grid.nodes.iter().map(|&x| (1.0 - x.abs()).powf(k.a)).collect();
    let abs_u: Vec<f64> = sol.u.iter().map(|v| v.abs()).collect();
    let f_w: Vec<f64> = sol
        .f_values()
        .iter()
        .zip(&delta_a)
        .map(|(f, d)| f.abs() * d)
        .collect();
    let f0_w: Vec<f64> = grid
        .nodes
        .iter()
        .zip(&delta_a)
        .map(|(&x, d)| p.f.eval(Site::Point(x), 0.0).abs() * d)
        .collect();
    let atoms_weighted = p
        .atoms
        .iter()
        .map(|&(z, m)| m.abs() * (1.0 - z.abs()).powf(k.a))
        .sum();
    let exterior_weighted = if p.g.is_zero() {
        0.0
    } else {
        let mut breaks = p.g.breaks();
        breaks.push(2.0);
        let e = p.g.endpoint_exponent().max(-0.999 + k.a);
        let rule = k.exterior_rule(grader, &breaks, e);
        rule.integrate_nodes(|n| {
            let t = n.y;
            let gap = n.gap_to(1.0) / t;
            let w = gap.powf(-k.a).min(gap.powf(-k.alpha - 1.0));
            let y = 1.0 / t;
            (p.g.eval(y, gap).abs() + p.g.eval(-y, gap).abs()) * w / (t * t)
        })
    };
    WeightedNorms {
        u_l1: grid.integrate(&abs_u),
        f_weighted: grid.integrate(&f_w),
        f0_weighted: grid.integrate(&f0_w),
        atoms_weighted,
        exterior_weighted,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::frac1d::solve::{solve_continuum, ContinuumProblem};
    use crate::nonlinearity::{Coefficient, Power, Zero};

    fn grader() -> Grader {
        Grader::new(12, 32)
    }

    #[test]
    fn exit_integral_of_constants() {
        // P_V 1 = 1, and with phi = 1 on the shell only it is the shell mass
        let k = FracKernels::new(1.2).unwrap();
        let g = grader();
        let one = ExteriorData::Constant { value: 1.0 };
        let v = exit_integral(&k, &g, 0.75, 0.3, &|_| 1.0, 0.0, &[], Some(&one));
        assert!((v - 1.0).abs() < 1e-9, "{v}");
        let shell = exit_integral(&k, &g, 0.75, 0.3, &|_| 1.0, 0.0, &[], None);
        let outside = 1.0 - shell;
        // P_V(1_{D^c}) from the unscaled exterior rule
        let direct = g.integrate(&[Point::singular(1.0, 0.0), Point::smooth(2.0)], |y| {
            k.poisson_ball(0.0, 0.75, 0.3, y) + k.poisson_ball(0.0, 0.75, 0.3, -y)
        }) + exit_integral(&k, &g, 0.75, 0.3, &|_| 0.0, 0.0, &[], Some(&ExteriorData::Indicator {
            lo: 2.0,
            hi: f64::INFINITY,
        })) + exit_integral(&k, &g, 0.75, 0.3, &|_| 0.0, 0.0, &[], Some(&ExteriorData::Indicator {
            lo: f64::NEG_INFINITY,
            hi: -2.0,
        }));
        assert!((outside - direct).abs() < 1e-9);
    }

    #[test]
    fn nested_dynkin() {
        let g = grader();
        for alpha in [0.5, 1.0, 1.5] {
            let k = FracKernels::new(alpha).unwrap();
            for x in [0.0, 0.35] {
                let d = dynkin_interval_defect(&k, &g, 0.6, &[(0.1, 1.0), (-0.4, 0.5)], 0.7, x).unwrap();
                assert!(d < 1e-8, "alpha {alpha} x {x}: {d:e}");
            }
        }
    }

    #[test]
    fn trace_of_bounded_solution_vanishes() {
        let f = Arc::new(Power {
            b: Coefficient::Constant(1.0),
            p: 3.0,
        });
        for alpha in [0.5, 1.0, 1.5] {
            let p = ContinuumProblem::new(alpha, ExteriorData::Constant { value: 1.0 }, f.clone()).unwrap();
            let s = solve_continuum(&p).unwrap();
            let t = trace_sequence(&s, &grader(), NEST_DEPTH, &trace_probes()).unwrap();
            assert!(t.max_abs_limit() < 1e-3, "alpha {alpha}: {:?}", t.limit);
            for v in &t.values {
                assert!(v.windows(2).skip(2).all(|w| w[1] <= w[0] + 1e-12));
            }
            if alpha == 1.0 {
                let lim = projective_limit_sequence(&s, &grader(), NEST_DEPTH, &trace_probes()).unwrap();
                assert!(lim.last().unwrap() < &1e-3, "{lim:?}");
            }
        }
    }

    #[test]
    fn martin_trace_is_recovered() {
        for alpha in [0.5, 1.0, 1.5] {
            let p = ContinuumProblem::new(alpha, ExteriorData::Zero, Arc::new(Zero))
                .unwrap()
                .with_martin(0.0, 1.0)
                .unwrap();
            let s = solve_continuum(&p).unwrap();
            let t = trace_sequence(&s, &grader(), NEST_DEPTH, &[0.0]).unwrap();
            assert!((t.limit[0] - 1.0).abs() < 0.05, "alpha {alpha}: {:?}", t.values[0]);
        }
    }

    #[test]
    fn eta_identity() {
        let g = grader();
        let k = FracKernels::new(1.0).unwrap();
        // u = 1 on D \ V: the mass is P(X_{tau_V} in D \ V)
        let r = 0.7;
        let e = eta_measure(&k, &g, r, 0.2, &|_| 1.0, 0.0);
        assert!(e.defect() < 1e-6 * e.kernel_formula, "{e:?}");
        assert!(e.kernel_formula > 0.0 && e.kernel_formula < 1.0);
        let z = eta_measure(&k, &g, r, 0.2, &|_| 0.0, 0.0);
        assert_eq!(z.double_integral, 0.0);
    }

    #[test]
    fn weighted_norms_of_unit_atom() {
        let p = ContinuumProblem::new(1.0, ExteriorData::Zero, Arc::new(Zero))
            .unwrap()
            .with_atoms(vec![(0.0, 1.0)])
            .unwrap();
        let s = solve_continuum(&p).unwrap();
        let w = weighted_norms(&s, &grader());
        // ||G(., 0)||_1 = E_0 tau = 1 for alpha = 1
        assert!((w.u_l1 - 1.0).abs() < 1e-3, "{w:?}");
        assert!(w.ratio().is_finite() && w.ratio() > 0.0);
        let zero = ContinuumProblem::new(1.0, ExteriorData::Zero, Arc::new(Zero)).unwrap();
        assert_eq!(weighted_norms(&solve_continuum(&zero).unwrap(), &grader()).ratio(), 0.0);
    }
}
