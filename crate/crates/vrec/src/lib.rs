//! Vehicle-route energy recommendation engine.
//!
//! Pipeline: synthetic data generation ([`synthgen`]) -> feature
//! engineering ([`features`]) -> three-component sequence regressor
//! with manual backpropagation ([`model`]) -> evaluation ([`metrics`])
//! -> total cost of ownership ([`tco`]) -> per-trip ranking
//! ([`recommender`]) and fleet-level optimal assignment
//! ([`assignment`]). The [`cli`] module ties it together behind the
//! `vrec` binary.

pub mod assignment;
pub mod cli;
pub mod domain;
pub mod error;
pub mod features;
pub mod metrics;
pub mod model;
pub mod recommender;
pub mod synthgen;
pub mod tco;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
