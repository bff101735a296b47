//! Patch-based adaptive mesh refinement for two-dimensional hyperbolic
//! systems using the second-order wave-propagation method.

pub mod bench;
pub mod config;
pub mod driver;
pub mod error;
pub mod executor;
pub mod field;
pub mod geometry;
pub mod hierarchy;
pub mod problem;
pub mod regrid;
pub mod riemann;
pub mod snapshot;
pub mod stepper;
pub mod sync;

pub use config::AmrConfig;
pub use error::{AmrError, Result};
