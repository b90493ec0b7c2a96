//! Stochastic micro-macro asymptotic-preserving schemes for linear kinetic
//! transport with multiplicative noise in the diffusive scaling.
//!
//! The density `f = ρ + εg` is split into its velocity average `ρ` on primal
//! nodes and a zero-mean fluctuation `g` on dual nodes. [`smm::SmmStepper`]
//! advances the pair stably for any `ε > 0` and degenerates into the explicit
//! three-point diffusion scheme as `ε → 0`.

// `!(x > 0.0)` rejects NaN on purpose, and stencils read best indexed.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod collision;
pub mod error;
pub mod grid;
pub mod harness;
pub mod noise;
pub mod problem;
pub mod reference;
pub mod smm;
pub mod stability;

pub use error::{Error, Result};
