//! Simulator for cooperative content caching at the vehicular edge.
//!
//! One simulated round spawns vehicles on a road segment covered by a local
//! RSU, trains a shared autoencoder by asynchronous federated learning,
//! predicts popular contents from the reconstructed ratings, and places
//! contents across the local and a neighboring RSU with a dueling DQN.
//! Baseline placement schemes and the hit-ratio and delay metrics are
//! provided for comparison.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autoencoder;
pub mod baselines;
pub mod channel;
pub mod config;
pub mod dataset;
pub mod drl;
pub mod error;
pub mod federation;
pub mod harness;
pub mod metrics;
pub mod mobility;
pub mod popularity;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
