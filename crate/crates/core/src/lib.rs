//! Exact binary-tree laboratory for reflected backward stochastic differential
//! equations: explicit and penalized solvers, convolution approximations,
//! comparison checks and a priori estimate diagnostics.

pub mod bsde;
pub mod error;
pub mod generators;
pub mod lattice;
pub mod rbsde;
pub mod theorems;
pub mod tree;

pub use error::{LabError, Result};
