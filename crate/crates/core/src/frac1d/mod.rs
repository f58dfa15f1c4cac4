//! Continuum backend: the fractional Laplacian `-(-Delta)^{alpha/2}` on the
//! interval `D = (-1, 1)`.

pub mod checks;
pub mod exterior;
pub mod grid;
pub mod kernels;
pub mod ops;
pub mod quad;
pub mod solve;

pub use exterior::ExteriorData;
pub use grid::{Grid, GridConfig};
pub use kernels::{FracKernels, KernelInvariants, MartinLimit};
pub use ops::{apply_pd, apply_rd, QuadValue, Quadrature, SlopeFit};
pub use quad::{Grader, Node, Point, Rule};
pub use solve::{solve_continuum, solve_continuum_with, ContinuumProblem, ContinuumSolution};
