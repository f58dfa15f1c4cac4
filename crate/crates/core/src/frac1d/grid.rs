//! Panel grid on `D`, graded toward the endpoints and toward atoms, with
//! piecewise Lagrange interpolation and the product-integration (Nystrom)
//! matrix of `G_D`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kernels::FracKernels;
use super::quad::{gauss_legendre, normalise_points, Grader, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    /// Gauss nodes per panel.
    pub order: usize,
    /// Panels `[1 - 2^{-k+1}, 1 - 2^{-k}]` toward each endpoint.
    pub boundary_levels: usize,
    /// Geometric panels on each side of an atom.
    pub atom_levels: usize,
    /// Uniform panels across `[-1/2, 1/2]`.
    pub interior_panels: usize,
    /// Order and depth of the rules that assemble the matrix.
    pub quad_order: usize,
    pub quad_levels: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            order: 8,
            boundary_levels: 24,
            atom_levels: 12,
            interior_panels: 4,
            quad_order: 12,
            quad_levels: 24,
        }
    }
}

impl GridConfig {
    /// One refinement step: more nodes per panel and deeper grading.
    pub fn refined(&self) -> Self {
        Self {
            order: self.order + 2,
            boundary_levels: self.boundary_levels + 4,
            atom_levels: self.atom_levels + 2,
            interior_panels: self.interior_panels * 2,
            quad_order: self.quad_order + 2,
            quad_levels: self.quad_levels + 8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Grid {
    pub config: GridConfig,
    pub breaks: Vec<f64>,
    pub nodes: Vec<f64>,
    /// `int l_j`, the interpolatory quadrature weights.
    pub weights: Vec<f64>,
    ref_nodes: Vec<f64>,
    bary: Vec<f64>,
    plain: Grader,
}

impl Grid {
    pub fn new(config: &GridConfig, atoms: &[f64]) -> Self {
        let mut pts = vec![-1.0, 0.0, 1.0];
        for k in 1..=config.boundary_levels {
            let e = 1.0 - 0.5f64.powi(k as i32);
            pts.extend([e, -e]);
        }
        let m = config.interior_panels.max(1);
        for j in 0..=m {
            pts.push(-0.5 + j as f64 / m as f64);
        }
        for &z in atoms {
            if z.abs() >= 1.0 {
                continue;
            }
            pts.push(z);
            let h0 = (0.5 * (1.0 - z.abs())).min(0.25);
            for k in 1..=config.atom_levels {
                let d = h0 * 0.5f64.powi(k as i32 - 1);
                pts.extend([z - d, z + d]);
            }
        }
        let breaks: Vec<f64> = normalise_points(pts.into_iter().map(Point::smooth).collect(), -1.0, 1.0)
            .into_iter()
            .map(|p| p.x)
            .collect();
        let (ref_nodes, ref_weights) = gauss_legendre(config.order);
        let q = ref_nodes.len();
        let bary: Vec<f64> = (0..q)
            .map(|j| {
                1.0 / (0..q)
                    .filter(|&k| k != j)
                    .map(|k| ref_nodes[j] - ref_nodes[k])
                    .product::<f64>()
            })
            .collect();
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for p in breaks.windows(2) {
            let h = 0.5 * (p[1] - p[0]);
            for (x, w) in ref_nodes.iter().zip(&ref_weights) {
                nodes.push(p[0] + h * (1.0 + x));
                weights.push(h * w);
            }
        }
        Self {
            config: config.clone(),
            breaks,
            nodes,
            weights,
            ref_nodes,
            bary,
            plain: Grader::new(config.quad_order, 0),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn panels(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn order(&self) -> usize {
        self.ref_nodes.len()
    }

    pub fn panel_of(&self, x: f64) -> Option<usize> {
        if !(x > -1.0 && x < 1.0) {
            return None;
        }
        let p = self.breaks.partition_point(|&b| b <= x);
        Some(p.saturating_sub(1).min(self.panels() - 1))
    }

    /// Lagrange basis values `l_j(x)` of panel `p` (length `order`).
    pub fn basis(&self, p: usize, x: f64) -> Vec<f64> {
        let (a, b) = (self.breaks[p], self.breaks[p + 1]);
        let t = (2.0 * x - a - b) / (b - a);
        let q = self.order();
        if let Some(j) = self.ref_nodes.iter().position(|&r| r == t) {
            let mut out = vec![0.0; q];
            out[j] = 1.0;
            return out;
        }
        let terms: Vec<f64> = (0..q).map(|j| self.bary[j] / (t - self.ref_nodes[j])).collect();
        let denom: f64 = terms.iter().sum();
        terms.into_iter().map(|v| v / denom).collect()
    }

    /// Piecewise polynomial interpolant of nodal `values`; zero outside `D`.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let Some(p) = self.panel_of(x) else {
            return 0.0;
        };
        let q = self.order();
        self.basis(p, x)
            .iter()
            .zip(&values[p * q..(p + 1) * q])
            .map(|(l, v)| l * v)
            .sum()
    }

    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }

    /// `A[i][j] = int G_D(x_i, y) l_j(y) dy`.
    pub fn nystrom(&self, k: &FracKernels) -> DMatrix<f64> {
        let n = self.len();
        let grader = Grader::new(self.config.quad_order, self.config.quad_levels);
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| self.row_with(k, &grader, self.nodes[i]))
            .collect();
        DMatrix::from_fn(n, n, |i, j| rows[i][j])
    }

    /// Row of the product-integration matrix at an arbitrary point `x`:
    /// `int G_D(x, y) l_j(y) dy` for every basis function.
    pub fn row(&self, k: &FracKernels, x: f64) -> Vec<f64> {
        let grader = Grader::new(self.config.quad_order, self.config.quad_levels);
        self.row_with(k, &grader, x)
    }

    /// Each panel is integrated with a rule graded at the endpoints of `D`,
    /// at `x` and at panel ends close to `x`.
    fn row_with(&self, k: &FracKernels, grader: &Grader, x: f64) -> Vec<f64> {
        let n = self.len();
        let q = self.order();
        let mut row = vec![0.0; n];
        if x.abs() >= 1.0 {
            return row;
        }
        let end = |e: f64| if e.abs() == 1.0 { Some(k.a) } else { None };
        for p in 0..self.panels() {
            let (a, b) = (self.breaks[p], self.breaks[p + 1]);
            let h = b - a;
            let mut pa = Point { x: a, beta: end(a) };
            let mut pb = Point { x: b, beta: end(b) };
            let pts: Vec<Point> = if x > a && x < b {
                vec![pa, Point::singular(x, k.diagonal_exponent()), pb]
            } else {
                if x <= a && a - x < h {
                    pa.beta = Some(pa.beta.unwrap_or(0.0).min(0.0));
                } else if x >= b && x - b < h {
                    pb.beta = Some(pb.beta.unwrap_or(0.0).min(0.0));
                }
                vec![pa, pb]
            };
            let rule = if pts.iter().any(|p| p.beta.is_some()) {
                grader.rule(&pts)
            } else {
                self.plain.rule(&pts)
            };
            let slot = &mut row[p * q..(p + 1) * q];
            for (node, w) in rule.iter() {
                let g = k.green_node(x, &node) * w;
                if g == 0.0 {
                    continue;
                }
                for (s, l) in slot.iter_mut().zip(self.basis(p, node.y)) {
                    *s += g * l;
                }
            }
        }
        row
    }
}
