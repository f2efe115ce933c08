//! Simulation and verification toolkit for self-accelerating invasion fronts
//! in trait-structured reaction-diffusion models.
//!
//! The crate is organised around five pieces that cross-check each other:
//!
//! * [`pde`] integrates the local model (logistic competition) and the
//!   non-local model (competition integrated over a trait window) with an
//!   explicit finite-difference scheme.
//! * [`bbm`] runs the dual branching Brownian motion whose spatial
//!   coordinate is time-changed by the trait clock `J = ∫θ ds`, plus Monte
//!   Carlo estimators for the moment identities used in the lower and upper
//!   bound arguments.
//! * [`theory`] evaluates the closed-form constants and curves
//!   (`γ₀ = (2/3)·2^{1/4}`, `x(t) = γ₀ t^{3/2}`, `θ(t) = (√2/2) t`, ...).
//! * [`mckean`] compares PDE values with branching-particle survival
//!   products.
//! * [`fronts`] extracts front positions, fits power laws and evaluates the
//!   local/non-local comparison inequalities.
//!
//! Data-parallel loops (PDE rows, Monte Carlo replicates) go through
//! [`par::Execution`], which uses rayon when the `parallel` feature is on
//! and falls back to plain iteration otherwise.

// `!(x > 0.0)` is deliberate: it also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bbm;
pub mod error;
pub mod fronts;
pub mod grid;
pub mod mckean;
pub mod par;
pub mod pde;
pub mod rng;
pub mod stats;
pub mod theory;

pub use error::{Error, Result};
pub use grid::{build_grid, trapezoid_integral, Field, Grid, ModelConfig, ModelKind, ThetaBoundary};
pub use par::Execution;
pub use rng::{MonteCarlo, RngSpec};
