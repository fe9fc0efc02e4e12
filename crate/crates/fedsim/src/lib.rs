//! Federated optimization simulator and convergence-bound verifier.
//!
//! The crate simulates server/worker federated training rounds (full-precision
//! and error-feedback variants, with pluggable local operators and contractive
//! compressors) on desk-scale problems, and evaluates the closed-form
//! convergence bounds for fixed, diminishing, and step-decay step-size
//! schedules so that measured trajectories can be checked against them.

pub mod compressors;
pub mod datasets;
pub mod error;
pub mod federated;
pub mod harness;
pub mod localops;
pub mod numerics;
pub mod problems;
pub mod schedules;
pub mod theory;

pub use error::{Error, Result};
