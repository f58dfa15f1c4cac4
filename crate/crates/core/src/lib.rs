//! Dirichlet problems `-Lu = f(., u) + mu` in `D`, `u = g` outside, for
//! symmetric pure-jump Dirichlet forms.
//!
//! Two backends share the fixed-point machinery: an exact finite-state engine
//! ([`form`], [`projection`], [`potential`]) and a fractional Laplacian on the
//! interval `(-1, 1)` ([`frac1d`]). Monte Carlo oracles ([`chain`], [`wos`])
//! check the Feynman-Kac representation independently.

pub mod chain;
pub mod error;
pub mod fixed_point;
pub mod form;
pub mod frac1d;
pub mod nonlinearity;
pub mod potential;
pub mod projection;
pub mod random;
pub mod semilinear;
pub mod spec;
pub mod stats;
pub mod trace;
pub mod wos;

pub use error::{Error, Result};
pub use form::{DiscreteForm, FunctionVector, NodeSet, SignedMeasure};
