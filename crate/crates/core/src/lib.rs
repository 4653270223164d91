//! Bilateral solution-norm bounds and stability/boundedness domain estimation
//! for vector nonlinear delay systems with variable coefficients.
//!
//! The pipeline decomposes a delay system's solution into a cascade of linear
//! constant-coefficient ODE iterates plus a residual, bounds the residual norm
//! by a scalar delay equation, and encloses the true solution norm between
//! `|Y_K| - |V| Z_K` and `|Y_K| + |V| Z_K`. Domain boundaries are traced by a
//! polar angular sweep with radial binary search against three evaluators:
//! direct simulation, the scalar-bound pipeline, and a partial-sum threshold.

pub mod boundary;
pub mod bounds;
pub mod cascade;
pub mod dde;
pub mod error;
pub mod models;
pub mod spectral;

pub use error::Error;

/// Convenience result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
