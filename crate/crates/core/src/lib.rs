//! Convex Q-learning for deterministic discrete-time optimal control.

pub mod baseline;
pub mod duality;
pub mod envs;
pub mod error;
pub mod features;
pub mod harness;
pub mod par;
pub mod program;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
