//! Trait-driven speaker turn-taking: the sequence model, a small network
//! mapping member traits to model parameters, synthetic data, baselines,
//! rank statistics and the experiment harness.

pub mod baselines;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod model;
pub mod net;
pub mod report;
pub mod seeds;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
