//! Communication-efficient federated optimization for satellite
//! constellations.
//!
//! The crate provides Fed-LT with compressed uplink and downlink, an error
//! feedback channel that wraps any compressor on any link, baseline
//! methods behind the same round interface, a desk-scale LEO constellation
//! scheduler, and an experiment harness that runs Monte Carlo campaigns.

pub mod baselines;
pub mod compressors;
pub mod error;
pub mod error_feedback;
pub mod fedlt;
pub mod harness;
pub mod metrics;
pub mod orbit;
pub mod participation;
pub mod problem;
pub mod simulation;
pub mod vector;

pub use error::{Error, Result};
pub use vector::ModelVector;
