//! Energy-conserving implicit integrators for ordinary differential equations.
//!
//! The crate builds continuous-stage Runge-Kutta (and Runge-Kutta-Nystrom)
//! methods whose kernel is truncated to polynomial degree `s` on the
//! orthonormal shifted Legendre basis, and discretizes them with a `k`-point
//! Gauss-Legendre quadrature.  The resulting one-step methods, HBVM(k, s),
//! have order `2s`, reduce to the `s`-stage Gauss collocation method at
//! `k = s`, and conserve polynomial Hamiltonians once `k` is large enough
//! for the quadrature to be exact.
//!
//! Modules:
//! - [`legendre`]: the orthonormal basis on [0, 1], its antiderivatives and
//!   the spectral matrices `X_s`, `X̂_s`;
//! - [`quadrature`]: Gauss-Legendre rules on [0, 1];
//! - [`tableau`]: discrete operators, Butcher tableaux and the continuous
//!   kernels;
//! - [`problems`]: problem classes (first order, special/general second
//!   order, order `k`) and a registry of built-in test problems;
//! - [`solver`]: one-step solvers in the block-coefficient ("gamma")
//!   formulation, plus dense output;
//! - [`integrator`]: time marching, convergence studies and energy-drift
//!   reports;
//! - [`verify`]: independent oracle paths (stage-form stepping, collocation
//!   tableaux, kernel quadrature) used to cross-validate the solvers.

// Index loops mirror the block/node structure of the formulas throughout.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod integrator;
pub mod legendre;
pub mod problems;
pub mod quadrature;
pub mod solver;
pub mod tableau;
pub mod verify;

pub use error::{Error, Result};
