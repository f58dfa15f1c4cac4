//! Closed-form kernels of the symmetric alpha-stable process killed on
//! leaving `D = (-1, 1)`, and their rescalings to subintervals.

use std::f64::consts::PI;

use serde::Serialize;
use statrs::function::gamma::gamma;

use super::quad::{normalise_points, Grader, Node, Point, Rule};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct FracKernels {
    pub alpha: f64,
    /// `alpha / 2`.
    pub a: f64,
    /// `j(r) = jump_const * r^{-1-alpha}`.
    pub jump_const: f64,
    green_const: f64,
    poisson_const: f64,
    exit_const: f64,
    /// `F_a(1)` in the `t`-variable, i.e. the integral up to `t = 1/2`.
    f_half: f64,
}

/// Sampled invariants of the kernels.
#[derive(Clone, Debug, Serialize)]
pub struct KernelInvariants {
    pub symmetry_defect: f64,
    pub min_green: f64,
    pub min_poisson: f64,
    pub poisson_norm_defect: f64,
    pub levy_symbol_defect: f64,
}

impl FracKernels {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::Invalid(format!("alpha = {alpha} is outside (0, 2)")));
        }
        let a = 0.5 * alpha;
        let jump_const = alpha * 2f64.powf(alpha - 1.0) * gamma(0.5 * (1.0 + alpha))
            / (PI.sqrt() * gamma(1.0 - a));
        let mut k = Self {
            alpha,
            a,
            jump_const,
            green_const: 1.0 / (2f64.powf(alpha) * gamma(a).powi(2)),
            poisson_const: (PI * a).sin() / PI,
            exit_const: 1.0 / gamma(1.0 + alpha),
            f_half: 0.0,
        };
        k.f_half = k.series_low(0.5);
        Ok(k)
    }

    pub fn jump(&self, r: f64) -> f64 {
        self.jump_const * r.abs().powf(-1.0 - self.alpha)
    }

    /// Exponent of the Green function's diagonal singularity for grading:
    /// `alpha - 1` below one, 0 (log or bounded cusp) otherwise.
    pub fn diagonal_exponent(&self) -> f64 {
        if self.alpha < 1.0 {
            self.alpha - 1.0
        } else {
            0.0
        }
    }

    /// `sum (c)_k / k! T^{k+a} / (k+a)`, `c = a + 1/2`; for `T <= 1/2`.
    fn series_low(&self, t: f64) -> f64 {
        let (a, c) = (self.a, self.a + 0.5);
        let mut coef = 1.0;
        let mut pow = t.powf(a);
        let mut sum = 0.0;
        for k in 0..400 {
            let kf = k as f64;
            let term = coef * pow / (kf + a);
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() {
                break;
            }
            coef *= (c + kf) / (kf + 1.0);
            pow *= t;
        }
        sum
    }

    /// `int_s^{1/2} (1-r)^{a-1} r^{-c} dr` by the binomial series.
    fn series_high(&self, s: f64) -> f64 {
        let (a, c) = (self.a, self.a + 0.5);
        let mut coef = 1.0;
        let mut sum = 0.0;
        for k in 0..400 {
            let kf = k as f64;
            let e = kf + 1.0 - c;
            let piece = if e.abs() < 1e-12 {
                (0.5 / s).ln()
            } else {
                (0.5f64.powf(e) - s.powf(e)) / e
            };
            let term = coef * piece;
            sum += term;
            if k > 2 && term.abs() <= 1e-17 * sum.abs() {
                break;
            }
            coef *= (1.0 - a + kf) / (kf + 1.0);
        }
        sum
    }

    /// `int_0^w s^{a-1} (1+s)^{-1/2} ds`.
    pub fn green_profile(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        if w <= 1.0 {
            self.series_low(w / (1.0 + w))
        } else {
            self.f_half + self.series_high(1.0 / (1.0 + w))
        }
    }

    /// Green function of the unit interval from `d = |x - y|` and the
    /// boundary gaps `ex = 1 - |x|`, `ey = 1 - |y|`.
    fn green_scaled(&self, d: f64, ex: f64, ey: f64) -> f64 {
        if ex <= 0.0 || ey <= 0.0 {
            return 0.0;
        }
        let px = ex * (2.0 - ex);
        if d == 0.0 {
            return if self.alpha > 1.0 {
                self.green_const * px.powf(self.alpha - 1.0) / (self.a - 0.5)
            } else {
                f64::INFINITY
            };
        }
        let py = ey * (2.0 - ey);
        let w = px * py / (d * d);
        self.green_const * d.powf(self.alpha - 1.0) * self.green_profile(w)
    }

    /// `G_D(x, y)`; zero unless both points are interior, `+inf` on the
    /// diagonal for `alpha <= 1`.
    pub fn green(&self, x: f64, y: f64) -> f64 {
        self.green_scaled((x - y).abs(), 1.0 - x.abs(), 1.0 - y.abs())
    }

    /// `G_D(x, y)` at a quadrature node, with distances taken from its offset.
    pub fn green_node(&self, x: f64, n: &Node) -> f64 {
        self.green_ball_node(0.0, 1.0, x, n)
    }

    /// Green function of the interval `(c - r, c + r)`.
    pub fn green_ball(&self, c: f64, r: f64, x: f64, y: f64) -> f64 {
        r.powf(self.alpha - 1.0)
            * self.green_scaled((x - y).abs() / r, 1.0 - (x - c).abs() / r, 1.0 - (y - c).abs() / r)
    }

    pub fn green_ball_node(&self, c: f64, r: f64, x: f64, n: &Node) -> f64 {
        let ey = signed_gap(c, r, n) / r;
        r.powf(self.alpha - 1.0) * self.green_scaled(n.gap_to(x) / r, 1.0 - (x - c).abs() / r, ey)
    }

    /// Poisson density of the unit interval from `d = |x - y|`, `ex = 1 - |x|`
    /// and `ey = |y| - 1`.
    fn poisson_scaled(&self, d: f64, ex: f64, ey: f64) -> f64 {
        if ex <= 0.0 || ey <= 0.0 {
            return 0.0;
        }
        let px = ex * (2.0 - ex);
        let py = ey * (2.0 + ey);
        self.poisson_const * (px / py).powf(self.a) / d
    }

    /// Poisson density `P_D(x, y)` for `|x| < 1 < |y|`.
    pub fn poisson(&self, x: f64, y: f64) -> f64 {
        self.poisson_scaled((x - y).abs(), 1.0 - x.abs(), y.abs() - 1.0)
    }

    pub fn poisson_ball(&self, c: f64, r: f64, x: f64, y: f64) -> f64 {
        self.poisson_scaled((x - y).abs() / r, 1.0 - (x - c).abs() / r, (y - c).abs() / r - 1.0) / r
    }

    /// `P_V` of the interval `(c - r, c + r)` at a node outside it.
    pub fn poisson_ball_node(&self, c: f64, r: f64, x: f64, n: &Node) -> f64 {
        let ey = -signed_gap(c, r, n) / r;
        self.poisson_scaled(n.gap_to(x) / r, 1.0 - (x - c).abs() / r, ey) / r
    }

    /// `E_x tau_D = (1 - x^2)^{alpha/2} / Gamma(1 + alpha)`.
    pub fn mean_exit(&self, x: f64) -> f64 {
        if x.abs() >= 1.0 {
            return 0.0;
        }
        self.exit_const * ((1.0 - x) * (1.0 + x)).powf(self.a)
    }

    /// `E_y tau_D` at a quadrature node, from its exact boundary gaps.
    pub fn mean_exit_node(&self, n: &Node) -> f64 {
        if signed_gap(0.0, 1.0, n) <= 0.0 {
            return 0.0;
        }
        let (l, r) = (n.gap_to(-1.0), n.gap_to(1.0));
        self.exit_const * (l * r).powf(self.a)
    }

    pub fn mean_exit_ball(&self, c: f64, r: f64, x: f64) -> f64 {
        r.powf(self.alpha) * self.mean_exit((x - c) / r)
    }

    /// Martin kernel at the endpoint `side` (sign of the endpoint), normalised
    /// at the origin.
    pub fn martin(&self, x: f64, side: f64) -> f64 {
        if x.abs() >= 1.0 {
            return 0.0;
        }
        ((1.0 - x) * (1.0 + x)).powf(self.a) / (x - side.signum()).abs()
    }

    /// `kappa_D(x) = int_{D^c} j(|x - y|) dy`.
    pub fn killing_density(&self, x: f64) -> f64 {
        if x.abs() >= 1.0 {
            return 0.0;
        }
        self.jump_const / self.alpha * ((1.0 - x).powf(-self.alpha) + (1.0 + x).powf(-self.alpha))
    }

    /// Symmetry defect, positivity and Poisson normalisation on a sample grid.
    pub fn invariants(&self, grader: &Grader) -> KernelInvariants {
        let xs: Vec<f64> = (-9..=9).map(|k| k as f64 / 10.0).chain([-0.999, 0.999]).collect();
        let mut symmetry_defect = 0.0f64;
        let mut min_green = f64::INFINITY;
        for &x in &xs {
            for &y in &xs {
                if x == y {
                    continue;
                }
                let (g1, g2) = (self.green(x, y), self.green(y, x));
                symmetry_defect = symmetry_defect.max((g1 - g2).abs() / g1.abs().max(1e-300));
                min_green = min_green.min(g1);
            }
        }
        let mut min_poisson = f64::INFINITY;
        for &x in &xs {
            for y in [1.0 + 1e-9, 1.5, 3.0, 100.0] {
                min_poisson = min_poisson.min(self.poisson(x, y)).min(self.poisson(x, -y));
            }
        }
        let mut poisson_norm_defect = 0.0f64;
        for &x in &[0.0, 0.5, -0.9, 0.999] {
            let m = self.poisson_mass(grader, x, |_, _| 1.0, &[], 0.0);
            poisson_norm_defect = poisson_norm_defect.max((m - 1.0).abs());
        }
        let levy_symbol_defect = [1.0, 2.0, 4.0]
            .iter()
            .map(|&xi| (self.levy_symbol(grader, xi) / xi.powf(self.alpha) - 1.0).abs())
            .fold(0.0, f64::max);
        KernelInvariants {
            symmetry_defect,
            min_green,
            min_poisson,
            poisson_norm_defect,
            levy_symbol_defect,
        }
    }

    /// `int_{|y|>1} P_D(x, y) g(y, |y| - 1) dy` through `y = +-1/t`. `breaks`
    /// are exterior points where `g` is not smooth; `endpoint` is the power
    /// exponent of `g` at `+-1`.
    pub fn poisson_mass(
        &self,
        grader: &Grader,
        x: f64,
        g: impl Fn(f64, f64) -> f64,
        breaks: &[f64],
        endpoint: f64,
    ) -> f64 {
        let rule = self.exterior_rule(grader, breaks, endpoint);
        self.poisson_mass_rule(&rule, x, g)
    }

    /// As [`Self::poisson_mass`] with a prebuilt [`Self::exterior_rule`].
    pub fn poisson_mass_rule(&self, rule: &Rule, x: f64, g: impl Fn(f64, f64) -> f64) -> f64 {
        if x.abs() >= 1.0 {
            return g(x, x.abs() - 1.0);
        }
        let px = (1.0 - x) * (1.0 + x);
        let scale = self.poisson_const * px.powf(self.a);
        let s: f64 = rule
            .iter()
            .map(|(n, w)| {
                let t = n.y;
                let one_minus_t = n.gap_to(1.0);
                let base = w * t.powf(self.alpha - 1.0) * (one_minus_t * (1.0 + t)).powf(-self.a);
                let (y, gap) = (1.0 / t, one_minus_t / t);
                let right = (1.0 - x) + x * one_minus_t;
                let left = (1.0 + x) - x * one_minus_t;
                base * (g(y, gap) / right + g(-y, gap) / left)
            })
            .sum();
        scale * s
    }

    /// Rule in `t = 1/|y|` on `[0, 1]` for exterior integrals.
    pub fn exterior_rule(&self, grader: &Grader, breaks: &[f64], endpoint: f64) -> Rule {
        let mut pts = vec![
            Point::singular(0.0, self.alpha - 1.0),
            Point::singular(1.0, -self.a + endpoint),
        ];
        for &b in breaks {
            if b.abs() > 1.0 && b.is_finite() {
                pts.push(Point::singular(1.0 / b.abs(), 0.0));
            }
        }
        grader.rule(&normalise_points(pts, 0.0, 1.0))
    }

    /// `int_0^inf (1 - cos(r xi)) 2 j(r) dr`, integrated over `K` periods with
    /// an asymptotic tail.
    pub fn levy_symbol(&self, grader: &Grader, xi: f64) -> f64 {
        let periods = 64usize;
        let period = 2.0 * PI / xi;
        let f = |r: f64| {
            // 1 - cos(r xi) = 2 sin^2(r xi / 2), accurate near r = 0
            2.0 * (0.5 * r * xi).sin().powi(2) * 2.0 * self.jump(r)
        };
        let mut sum = grader.integrate(
            &[Point::singular(0.0, 1.0 - self.alpha), Point::smooth(period)],
            f,
        );
        for k in 1..periods {
            let pts = [
                Point::smooth(k as f64 * period),
                Point::smooth((k + 1) as f64 * period),
            ];
            sum += grader.integrate(&pts, f);
        }
        // tail beyond R = K periods: 2c [R^{-alpha}/alpha - xi^alpha int_{xi R}^inf cos(s) s^{-1-alpha} ds]
        let r = periods as f64 * period;
        let big_t = r * xi;
        let b = 1.0 + self.alpha;
        // cos(T) = 1, sin(T) = 0 at a whole number of periods
        let cos_tail = b * big_t.powf(-b - 1.0) - b * (b + 1.0) * (b + 2.0) * big_t.powf(-b - 3.0)
            + b * (b + 1.0) * (b + 2.0) * (b + 3.0) * (b + 4.0) * big_t.powf(-b - 5.0);
        sum + 2.0 * self.jump_const * (r.powf(-self.alpha) / self.alpha - xi.powf(self.alpha) * cos_tail)
    }

    /// `int_{-1}^{1} G_D(x, y) h(y) dy` with grading at `x` and at `+-1`;
    /// `breaks` are interior points where `h` is not smooth and `edge` is the
    /// power exponent of `h` at `+-1`. `h` sees the node, so it can use exact
    /// boundary gaps.
    pub fn green_mass(
        &self,
        grader: &Grader,
        x: f64,
        h: impl Fn(&Node) -> f64,
        breaks: &[f64],
        edge: f64,
    ) -> f64 {
        if x.abs() >= 1.0 {
            return 0.0;
        }
        let mut pts = vec![
            Point::singular(-1.0, self.a + edge),
            Point::singular(1.0, self.a + edge),
            Point::singular(x, self.diagonal_exponent()),
        ];
        for &b in breaks {
            if b.abs() < 1.0 {
                pts.push(Point::singular(b, 0.0));
            }
        }
        let pts = normalise_points(pts, -1.0, 1.0);
        grader.integrate_nodes(&pts, |n| {
            let v = h(&n);
            if v == 0.0 {
                0.0
            } else {
                self.green_node(x, &n) * v
            }
        })
    }

    /// Richardson-extrapolated `lim G(x, y) / G(0, y)` as `y -> side` along
    /// `y_k = side (1 - base^{-k})`.
    pub fn martin_limit(&self, x: f64, side: f64, base: f64) -> MartinLimit {
        let s = side.signum();
        let ks: Vec<i32> = (2..14).collect();
        let row: Vec<f64> = ks
            .iter()
            .map(|&k| {
                let y = s * (1.0 - base.powi(-k));
                self.green(x, y) / self.green(0.0, y)
            })
            .collect();
        // Neville table for the limit delta -> 0 with delta_k = base^{-k}
        let mut table = row.clone();
        let mut diag = vec![table[table.len() - 1]];
        for level in 1..table.len() {
            let factor = base.powi(level as i32);
            for i in (level..table.len()).rev() {
                table[i] = table[i] + (table[i] - table[i - 1]) / (factor - 1.0);
            }
            diag.push(table[table.len() - 1]);
        }
        // keep the better-conditioned part of the table
        let used = &diag[..6];
        let value = used[used.len() - 1];
        let tail_variation = (used[used.len() - 1] - used[used.len() - 2]).abs();
        MartinLimit {
            value,
            tail_variation,
        }
    }
}

/// Distance from a node to the nearer end of `(c - r, c + r)`, positive
/// inside and negative outside; exact when the node is anchored at an end.
pub fn signed_gap(c: f64, r: f64, n: &Node) -> f64 {
    let inside = if n.anchor == c + r {
        n.off < 0.0
    } else if n.anchor == c - r {
        n.off > 0.0
    } else {
        (n.y - c).abs() < r
    };
    let gap = n.gap_to(c - r).min(n.gap_to(c + r));
    if inside {
        gap
    } else {
        -gap
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MartinLimit {
    pub value: f64,
    pub tail_variation: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grader() -> Grader {
        Grader::new(16, 40)
    }

    #[test]
    fn alpha_range() {
        assert!(FracKernels::new(0.0).is_err());
        assert!(FracKernels::new(2.0).is_err());
        assert!(FracKernels::new(1.2).is_ok());
    }

    #[test]
    fn cauchy_green_closed_form() {
        let k = FracKernels::new(1.0).unwrap();
        for &(x, y) in &[(0.0, 0.5), (-0.3, 0.9), (0.99, 0.98), (0.1, 0.1000001), (-0.999, 0.2)] {
            let (x, y): (f64, f64) = (x, y);
            let exact = ((1.0 - x * y + ((1.0 - x * x) * (1.0 - y * y)).sqrt()) / (x - y).abs()).ln() / PI;
            let got = k.green(x, y);
            assert!((got - exact).abs() < 1e-12 * exact.max(1.0), "{x} {y}: {got} vs {exact}");
        }
    }

    #[test]
    fn profile_branches_agree_with_quadrature() {
        // direct integral in t of t^{a-1}(1-t)^{-a-1/2} on both branches
        let g = grader();
        for alpha in [0.5, 1.0, 1.5] {
            let k = FracKernels::new(alpha).unwrap();
            for w in [0.3f64, 0.99, 1.01, 7.0, 1e4] {
                let t = w / (1.0 + w);
                let q = g.integrate(
                    &[Point::singular(0.0, k.a - 1.0), Point::singular(t, 0.0)],
                    |s| s.powf(k.a - 1.0) * (1.0 - s).powf(-k.a - 0.5),
                );
                let v = k.green_profile(w);
                assert!((v - q).abs() < 1e-11 * q, "alpha {alpha} w {w}: {v} vs {q}");
            }
        }
    }

    #[test]
    fn green_diagonal_limit_above_one() {
        let k = FracKernels::new(1.5).unwrap();
        let near = k.green(0.3, 0.3 + 1e-9);
        assert!((near - k.green(0.3, 0.3)).abs() < 1e-4 * near);
    }

    #[test]
    fn mean_exit_matches_green_mass() {
        let g = grader();
        for alpha in [0.5, 1.0, 1.5] {
            let k = FracKernels::new(alpha).unwrap();
            for x in [0.0, 0.6, -0.95] {
                let q = k.green_mass(&g, x, |_| 1.0, &[], 0.0);
                assert!((q - k.mean_exit(x)).abs() < 1e-9, "alpha {alpha} x {x}: {q}");
            }
        }
    }

    #[test]
    fn killing_density_alpha_one() {
        // j = 1/(pi r^2): int_{|y|>1} dy / (pi y^2) = 2/pi at the origin
        let k = FracKernels::new(1.0).unwrap();
        assert!((k.killing_density(0.0) - 2.0 / PI).abs() < 1e-15);
        let g = grader();
        for x in [0.0, 0.7] {
            // int_1^inf j(y - x) + j(y + x) dy; arctan-free closed form at alpha = 1
            let direct = g.integrate(&[Point::singular(1.0, 0.0), Point::smooth(50.0)], |y| {
                k.jump(y - x) + k.jump(y + x)
            }) + (1.0 / (50.0 - x) + 1.0 / (50.0 + x)) / PI;
            assert!((direct - k.killing_density(x)).abs() < 1e-10 * direct);
            let q = k.poisson_mass(&g, x, |_, _| 1.0, &[], 0.0);
            assert!((q - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn invariants_hold() {
        let g = grader();
        for alpha in [0.5, 1.0, 1.5] {
            let inv = FracKernels::new(alpha).unwrap().invariants(&g);
            assert!(inv.symmetry_defect < 1e-8, "{inv:?}");
            assert!(inv.min_green >= 0.0 && inv.min_poisson >= 0.0);
            assert!(inv.poisson_norm_defect < 1e-6, "{inv:?}");
            assert!(inv.levy_symbol_defect < 1e-4, "{inv:?}");
        }
    }

    #[test]
    fn martin_limit_matches_closed_form() {
        for alpha in [0.5, 1.0, 1.5] {
            let k = FracKernels::new(alpha).unwrap();
            assert!((k.martin(0.0, 1.0) - 1.0).abs() < 1e-15);
            for x in [0.5, -0.3] {
                let l2 = k.martin_limit(x, 1.0, 2.0);
                let l3 = k.martin_limit(x, 1.0, 3.0);
                let exact = k.martin(x, 1.0);
                assert!(l2.tail_variation < 1e-4, "{l2:?}");
                assert!((l2.value - l3.value).abs() < 1e-4);
                assert!((l2.value - exact).abs() < 1e-6 * exact, "{} vs {exact}", l2.value);
            }
            let r = k.martin(0.4, 1.0) / k.martin(-0.4, 1.0);
            let s = k.martin(-0.4, -1.0) / k.martin(0.4, -1.0);
            assert!((r - s).abs() < 1e-12);
        }
    }
}
