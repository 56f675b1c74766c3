//! Numerical laboratory for Pohozaev-type identities of the mixed operator
//! `-Δu + a(-Δ)^s u` with homogeneous exterior data.

pub mod error;
pub mod fracops;
pub mod functionals;
pub mod geometry;
pub mod linalg;
pub mod numerics;
pub mod pohozaev;
pub mod solvers;

pub use error::{Error, Result};
