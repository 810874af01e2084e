//! Forward solves, adjoint gradients and exponent continuation for
//! reconstructing a nonnegative absorption field from boundary misfits of a
//! coupled pair of Robin elliptic systems.
//!
//! The pipeline: build a mesh and coefficient set, assemble the two system
//! operators once (they do not depend on the absorption field), then drive a
//! projected-gradient minimisation of the regularised p-norm misfit with
//! adjoint-based gradients, increasing p along a schedule to approach the
//! uniform-misfit problem. Measure densities, their total variations and
//! complementarity residuals are tracked throughout.

pub mod adjoint;
pub mod assembly;
pub mod coefficients;
pub mod cost;
pub mod error;
pub mod fields;
pub mod forward;
pub mod linsolve;
pub mod mesh;
pub mod optimize;

pub use error::{Error, Result};
