//! Shared numerical layer: quadrature, radial grids and stencils, dual
//! numbers and banded linear algebra.

pub mod autodiff;
pub mod banded;
pub mod grid;
pub mod quadrature;

pub use autodiff::{Dilation, Directional, Dual, Real, ScalarField4};
pub use banded::{BandLu, BandMatrix};
pub use grid::{radial_laplacian, Grading, RadialField, RadialGrid, RadialOperator};
pub use quadrature::{
    ball_volume_integral, gauss_rule, improper_radial_integral, sphere_surface_integral, Quadrature1D,
    SphereRuleS3,
};
