//! Numerical laboratory for the spiked rectangular model `Y = sqrt(β/N) u vᵀ + W`.
//!
//! The crate computes the likelihood ratio of the spiked model against pure noise
//! exactly at desk scale, simulates posterior overlaps, evaluates the replica-symmetric
//! potential, and compares all of it against the closed-form asymptotic predictions.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod exact;
pub mod gray;
pub mod harness;
pub mod lse;
pub mod mcmc;
pub mod model;
pub mod predict;
pub mod prior;
pub mod quadrature;
pub mod rs;
pub mod spectral;
pub mod rng;

pub use error::{Error, Result};
