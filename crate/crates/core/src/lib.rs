//! Round-based simulator of UAV-relayed decentralized learning over a sparse
//! ground mesh.
//!
//! Each round the simulator samples on/off ground and air-to-ground links
//! from log-distance channel models, lets a relay UAV move along a policy
//! (optimized waypoints or one of the static/heuristic baselines), runs one
//! step of asynchronous decentralized SGD on every device and gossips the
//! local estimates with Metropolis-Hastings weights.

pub mod connectivity;
pub mod data;
pub mod error;
pub mod experiment;
pub mod geometry;
pub mod learning;
pub mod rng;
pub mod trajectory;
pub mod validate;

pub use error::{Error, Result};
