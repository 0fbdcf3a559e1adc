//! Numerical lab for the Allen–Cahn equation with a nonlinear Robin
//! boundary condition and its sharp-interface limit, mean curvature flow
//! with a prescribed contact angle.

pub mod acsolver;
pub mod error;
pub mod geometry;
pub mod halfplane;
pub mod harness;
pub mod linalg;
pub mod mcf;
pub mod potential;
pub mod profile;
pub mod quadrature;
pub mod spectrum;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
