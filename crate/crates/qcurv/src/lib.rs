//! Numerical tools for radial constant Q-curvature problems with a point
//! singularity.
//!
//! Modules build on each other: [`constants`] and [`quadrature`] at the bottom,
//! then [`conformal`] and [`spectral`], the singular kernels in [`kernels`],
//! the inequality laboratory [`mtlab`], the variational [`solver`], and the
//! integrability checks in [`polyint`].

pub mod acceptance;
pub mod conformal;
pub mod constants;
pub mod error;
pub mod kernels;
pub mod mtlab;
pub mod polyint;
pub mod quadrature;
pub mod solver;
pub mod spectral;

pub use conformal::{Chart, LogGrid, RadialField};
pub use constants::DimensionContext;
pub use error::{Error, Result};
pub use mtlab::WeightSpec;
pub use solver::{RadialPolynomial, SolutionReport, SolveRequest};
pub use spectral::{ZonalBasis, ZonalSpectrum};
