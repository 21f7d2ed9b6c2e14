//! Sensing-capacity lower bounds for large-scale detection sensor networks.
//!
//! The crate is split into four layers:
//!
//! - [`types`]: exact and relaxed types, joint types, entropy algebra and
//!   type-class counting;
//! - [`model`]: sensing functions, noise channels and the per-sensor output
//!   distributions they induce for each connection discipline;
//! - [`bounds`]: the capacity lower bounds, random-coding exponents, sweeps
//!   and the replication comparison;
//! - [`sim`]: a seeded Monte Carlo simulator with maximum-likelihood and
//!   loopy belief-propagation decoding.

pub mod error;
pub mod bounds;
pub mod model;
pub mod sim;
pub mod types;

pub use error::{Error, Result};
