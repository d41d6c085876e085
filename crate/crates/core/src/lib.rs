//! Discrete-event simulator of the Protected Audience auction and reporting
//! pipeline, together with the request-linkage attacks that run on top of it
//! and the analytic tools used to evaluate them.

pub mod adversary;
pub mod aggregation;
pub mod analytics;
pub mod browser;
pub mod error;
pub mod harness;
pub mod kanon;
pub mod model;

pub use error::{Error, Result};

/// Deterministic generator used throughout the simulation.
pub type SimRng = rand_chacha::ChaCha8Rng;
