//! Second-order primal-dual dynamics for convex-concave saddle problems.

pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod problem;
pub mod schedule;

pub use error::{Error, Result};
