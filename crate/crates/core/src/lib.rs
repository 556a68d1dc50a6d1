//! Surrogate-assisted training of hybrid quantum-classical networks.
//!
//! The crate bundles a state-vector simulator for a rotation/CZ circuit
//! family, a shot-sampled quantum layer, reference Jacobians, a small dense
//! network kernel, the tangential surrogate that stands in for the quantum
//! layer during backpropagation, and a TD3 agent whose actor routes through
//! a swappable middle block.

pub mod agent;
pub mod env;
pub mod error;
pub mod gradient;
pub mod harness;
pub mod neural;
pub mod pqc;
pub mod quantum;
pub mod surrogate;

pub use error::{Error, Result};
