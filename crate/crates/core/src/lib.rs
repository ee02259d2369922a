//! Fitting neural implicit surfaces to unoriented point clouds.
//!
//! The crate provides a softplus MLP with exact spatial and parameter
//! derivatives, the IGR, SIREN, Neural-Pull and DiffCD training losses,
//! surface sampling by SDF-descent from a marching-cubes sample bank,
//! level-set extraction, Chamfer-style shape metrics, and numerical checks of
//! the surface-area behaviour of the SIREN off-surface penalty.

pub mod analysis;
pub mod config;
pub mod demo;
pub mod error;
pub mod field;
pub mod geometry;
pub mod io;
pub mod losses;
pub mod mesher;
pub mod metrics;
pub mod real;
pub mod sampler;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
pub use geometry::{BoundingBox, PointCloud};
pub use real::{Precision, Real};
