//! Streaming PCA with stochastic Gauss-Newton and Oja-type iterations.
//!
//! Matrices are `nalgebra` column-major `f64` matrices; samples are columns.

pub mod algorithms;
pub mod data;
pub mod diffusion;
pub mod error;
pub mod harness;
pub mod matops;
pub mod metrics;
pub mod rng;
pub mod schedules;

pub use error::{OpcaError, Result};
pub use matops::{Matrix, Vector};
