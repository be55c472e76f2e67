//! Numerical verification lab for the four-dimensional biharmonic Lane–Emden
//! problem `Δ²u = (u⁺)^p` on the unit ball with clamped boundary conditions.
//!
//! The crate is organised in layers:
//!
//! * [`numerics`]: quadrature, radial grids and stencils, forward-mode
//!   automatic differentiation and a banded LU factorisation.
//! * [`bubble`]: the Liouville bubble `Z`, its moments and the first-order
//!   correction `η₀`.
//! * [`greenball`]: Boggio's Green function of `Δ²` on the ball, the Robin
//!   function and the Kirchhoff–Routh functional.
//! * [`pohozaev`]: the surface forms `P` and `Q` and the Pohozaev identities.
//! * [`solver`]: radial Newton solver, continuation in `p` and diagnostics.
//! * [`spectrum`]: mode-decomposed linearised operators and eigenvalue scans.
//! * [`report`] and [`cli`]: check records and the batch front end.

// NaN-rejecting guards read `!(x > 0.0)` on purpose; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bubble;
pub mod cli;
pub mod error;
pub mod greenball;
pub mod numerics;
pub mod pohozaev;
pub mod report;
pub mod solver;
pub mod spectrum;

pub use error::{Error, Result};

/// Area of the unit three-sphere, `|S³| = 2π²`.
pub const S3_AREA: f64 = 2.0 * std::f64::consts::PI * std::f64::consts::PI;

/// Normalisation `1/(8π²)` of the fundamental solution of `Δ²` in four dimensions.
pub const KAPPA: f64 = 1.0 / (8.0 * std::f64::consts::PI * std::f64::consts::PI);
