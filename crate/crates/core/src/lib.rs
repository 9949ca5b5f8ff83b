pub mod coupling;
pub mod dirac_algebra;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod potential;
pub mod quadrature;
pub mod shell_ops;
pub mod sphere_spectral;

pub use error::{Error, Result};
pub use geometry::Vec3;
pub use linalg::C64;
pub use nalgebra::{DMatrix, DVector};
