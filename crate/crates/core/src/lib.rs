//! Quasi-explicit solution of the thin-duct shear-flow acoustics model
//!
//! ```text
//! (∂t + M(y) ∂x)² u − ½ ∂x² ∫₋₁¹ u dy = 0
//! ```
//!
//! built from the norming factor `N(λ) = (2 − F(λ))⁻¹`, its poles and its
//! boundary values on the cut `[M₋, M₊]`, and checked against an independent
//! Fourier time-stepping solver.

pub mod cli;
pub mod data;
pub mod dispersion;
pub mod error;
pub mod kernels;
pub mod oracle;
pub mod profile;
pub mod quadrature;
pub mod solution;
pub mod spectrum;

pub use error::{Error, Result};
