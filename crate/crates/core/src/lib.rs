//! Bulk-surface Cahn-Hilliard solver with dynamic boundary conditions.
//!
//! Linear bulk-surface finite elements on triangulations of planar domains,
//! Robin-type coupling of bulk and surface fields through the relaxation
//! parameters `K` and `L` (including the limits `0` and `∞`), and linearly
//! implicit BDF time stepping of order one to five.

pub mod bdf;
pub mod error;
pub mod fem;
pub mod linalg;
pub mod manufactured;
pub mod mesh;
pub mod potentials;
pub mod system;

pub use error::{Error, Result};
