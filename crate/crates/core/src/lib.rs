//! Brascamp-Lieb and adjoint Brascamp-Lieb constants: gaussian and subgroup
//! computations, grid verification of the adjoint inequalities, tomographic lower
//! bounds, entropy and Gowers-norm checks.

pub mod ascent;
pub mod datum;
pub mod discrete;
pub mod entropy;
pub mod error;
pub mod families;
pub mod gaussian;
pub mod gowers;
pub mod grid;
pub mod linalg;
pub mod perturbation;
pub mod report;
pub mod scenario;
pub mod spd;
pub mod tomography;

pub use error::{Error, Result};
