//! Composite Gauss-Legendre rules graded geometrically toward endpoint
//! singularities of power type.

use nalgebra::{DMatrix, SymmetricEigen};

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Golub-Welsch), nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre needs at least one node");
    let jacobi = DMatrix::from_fn(n, n, |i, j| {
        if i + 1 == j || j + 1 == i {
            let k = i.max(j) as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        } else {
            0.0
        }
    });
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| (eig.eigenvalues[k], 2.0 * eig.eigenvectors[(0, k)].powi(2)))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    // symmetrise to remove eigen-solver round-off
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let j = n - 1 - i;
        x[i] = 0.5 * (pairs[i].0 - pairs[j].0);
        w[i] = 0.5 * (pairs[i].1 + pairs[j].1);
    }
    (x, w)
}

/// A quadrature node together with its offset from the breakpoint it was
/// graded toward. Near a singular point `y` alone has lost the offset to
/// rounding; kernels should measure distances through [`Node::gap_to`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Node {
    pub y: f64,
    pub anchor: f64,
    pub off: f64,
}

impl Node {
    /// `|y - p|`, exact to relative precision when `p` is the anchor.
    pub fn gap_to(&self, p: f64) -> f64 {
        if p == self.anchor {
            self.off.abs()
        } else {
            (self.y - p).abs()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    anchors: Vec<f64>,
    offsets: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    pub fn node(&self, k: usize) -> Node {
        Node {
            y: self.nodes[k],
            anchor: self.anchors[k],
            off: self.offsets[k],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Node, f64)> + '_ {
        (0..self.len()).map(|k| (self.node(k), self.weights[k]))
    }

    pub fn integrate_nodes(&self, f: impl Fn(Node) -> f64) -> f64 {
        self.iter().map(|(n, w)| w * f(n)).sum()
    }

    fn push(&mut self, y: f64, w: f64, anchor: f64, off: f64) {
        self.nodes.push(y);
        self.weights.push(w);
        self.anchors.push(anchor);
        self.offsets.push(off);
    }
}

/// A breakpoint of a piecewise rule; `beta` is the exponent of the
/// integrand's power behaviour `|y - x|^beta` at the point, if any. A point
/// with `Some(0.0)` is graded without a change of variables, which resolves
/// near-singular peaks and logarithms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub beta: Option<f64>,
}

impl Point {
    pub fn smooth(x: f64) -> Self {
        Self { x, beta: None }
    }

    pub fn singular(x: f64, beta: f64) -> Self {
        Self { x, beta: Some(beta) }
    }
}

#[derive(Clone, Debug)]
pub struct Grader {
    x: Vec<f64>,
    w: Vec<f64>,
    /// Geometric levels toward a singular point; grading also stops once the
    /// innermost piece is narrower than `1e-10 |s|`.
    pub levels: usize,
    /// Uniform panels on a segment without singular ends.
    pub smooth_panels: usize,
}

impl Grader {
    pub fn new(order: usize, levels: usize) -> Self {
        let (x, w) = gauss_legendre(order);
        Self {
            x,
            w,
            levels,
            smooth_panels: 2,
        }
    }

    pub fn order(&self) -> usize {
        self.x.len()
    }

    /// The same Gauss rule with a different grading depth.
    pub fn with_levels(&self, levels: usize) -> Self {
        Self {
            levels,
            ..self.clone()
        }
    }

    fn gauss_into(&self, rule: &mut Rule, a: f64, b: f64) {
        let h = 0.5 * (b - a);
        for (x, w) in self.x.iter().zip(&self.w) {
            let off = h * (1.0 + x);
            rule.push(a + off, h * w, a, off);
        }
    }

    /// `int_s^e`, graded toward `s` (which may be either end); the integrand
    /// behaves like `|y - s|^beta` near `s`.
    fn toward_into(&self, rule: &mut Rule, s: f64, e: f64, beta: f64) {
        let len = e - s;
        let mut outer = 1.0;
        for _ in 0..self.levels {
            let inner = 0.5 * outer;
            // offsets from s are formed before adding s, so they stay exact
            let (mid, half) = (len * 0.75 * outer, (len * 0.25 * outer).abs());
            for (x, w) in self.x.iter().zip(&self.w) {
                let off = mid + half * x;
                rule.push(s + off, half * w, s, off);
            }
            outer = inner;
        }
        // innermost piece: y = s + d tau^gamma flattens |y - s|^beta
        let d = len * outer;
        let gamma = 1.0 / (1.0 + beta);
        for (x, w) in self.x.iter().zip(&self.w) {
            let tau = 0.5 * (x + 1.0);
            let off = d * tau.powf(gamma);
            let jac = d.abs() * gamma * tau.powf(gamma - 1.0) * 0.5 * w;
            rule.push(s + off, jac, s, off);
        }
    }

    /// Rule on `[points[0].x, points[last].x]` respecting every breakpoint.
    pub fn rule(&self, points: &[Point]) -> Rule {
        let mut rule = Rule::default();
        for seg in points.windows(2) {
            let (p, q) = (seg[0], seg[1]);
            if q.x <= p.x {
                continue;
            }
            match (p.beta, q.beta) {
                (None, None) => {
                    let k = self.smooth_panels.max(1);
                    let h = (q.x - p.x) / k as f64;
                    for i in 0..k {
                        self.gauss_into(&mut rule, p.x + i as f64 * h, p.x + (i + 1) as f64 * h);
                    }
                }
                (Some(b), None) => self.toward_into(&mut rule, p.x, q.x, b),
                (None, Some(b)) => self.toward_into(&mut rule, q.x, p.x, b),
                (Some(b1), Some(b2)) => {
                    let mid = 0.5 * (p.x + q.x);
                    self.toward_into(&mut rule, p.x, mid, b1);
                    self.toward_into(&mut rule, q.x, mid, b2);
                }
            }
        }
        rule
    }

    pub fn integrate(&self, points: &[Point], f: impl Fn(f64) -> f64) -> f64 {
        self.rule(points).integrate(f)
    }

    pub fn integrate_nodes(&self, points: &[Point], f: impl Fn(Node) -> f64) -> f64 {
        self.rule(points).integrate_nodes(f)
    }
}

/// Sorts points, merging duplicates (a singular flag wins, with the smaller
/// exponent) and dropping points outside `[lo, hi]`.
pub fn normalise_points(mut pts: Vec<Point>, lo: f64, hi: f64) -> Vec<Point> {
    pts.retain(|p| p.x >= lo && p.x <= hi);
    pts.sort_by(|a, b| a.x.total_cmp(&b.x));
    let mut out: Vec<Point> = Vec::with_capacity(pts.len());
    for p in pts {
        match out.last_mut() {
            Some(last) if (p.x - last.x).abs() <= 4.0 * f64::EPSILON * (1.0 + p.x.abs()) => {
                last.beta = match (last.beta, p.beta) {
                    (Some(a), Some(b)) => Some(a.min(b)),
                    (a, b) => a.or(b),
                };
            }
            _ => out.push(p),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre(6);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        // degree 11 is integrated exactly
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((i - 2.0 / 11.0).abs() < 1e-14);
        assert!(x.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn endpoint_power_singularity() {
        let g = Grader::new(10, 30);
        for beta in [-0.75f64, -0.5, 0.25] {
            let v = g.integrate(&[Point::singular(0.0, beta), Point::smooth(1.0)], |y| {
                y.powf(beta) * (1.0 + y)
            });
            let exact = 1.0 / (1.0 + beta) + 1.0 / (2.0 + beta);
            assert!((v - exact).abs() < 1e-12, "beta {beta}: {v} vs {exact}");
        }
    }

    #[test]
    fn interior_and_two_sided_points() {
        let g = Grader::new(10, 40);
        // int_{-1}^{1} |y - 0.3|^{-1/2} dy
        let pts = [
            Point::smooth(-1.0),
            Point::singular(0.3, -0.5),
            Point::smooth(1.0),
        ];
        let v = g.integrate_nodes(&pts, |n| n.gap_to(0.3).powf(-0.5));
        let exact = 2.0 * (1.3f64.sqrt() + 0.7f64.sqrt());
        assert!((v - exact).abs() < 1e-12, "{v} vs {exact}");
        // beta-type integrand on [0, 1]: B(1/2, 1/3)
        let pts = [Point::singular(0.0, -0.5), Point::singular(1.0, -2.0 / 3.0)];
        let v = g.integrate_nodes(&pts, |n| n.gap_to(0.0).powf(-0.5) * n.gap_to(1.0).powf(-2.0 / 3.0));
        let exact = statrs::function::beta::beta(0.5, 1.0 / 3.0);
        assert!((v - exact).abs() < 1e-11, "{v} vs {exact}");
    }

    #[test]
    fn logarithm_and_near_singular_peak() {
        let g = Grader::new(12, 40);
        let v = g.integrate(&[Point::singular(0.0, 0.0), Point::smooth(1.0)], |y| y.ln());
        assert!((v + 1.0).abs() < 1e-12);
        // peak of width 1e-6 just outside the interval
        let eps = 1e-6;
        let v = g.integrate(&[Point::smooth(0.0), Point::singular(1.0, 0.0)], |y| {
            1.0 / (1.0 + eps - y)
        });
        let exact = ((1.0 + eps) / eps).ln();
        assert!((v - exact).abs() < 1e-10 * exact);
    }

    #[test]
    fn normalise_merges_and_filters() {
        let pts = normalise_points(
            vec![
                Point::smooth(0.5),
                Point::singular(0.5, -0.2),
                Point::smooth(2.0),
                Point::smooth(-1.0),
            ],
            -1.0,
            1.0,
        );
        assert_eq!(pts, vec![Point::smooth(-1.0), Point::singular(0.5, -0.2)]);
    }
}
