//! Numerical laboratory for conservative affine processes on `D = R₊^m × R^n`.

pub mod cli;
pub mod config;
pub mod error;
pub mod harness;
pub mod levy;
pub mod linalg;
pub mod models;
pub mod ode;
pub mod params;
pub mod quad;
pub mod riccati;
pub mod sde;
pub mod wasserstein;

pub use error::{Error, Result};
