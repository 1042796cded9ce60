//! Simulation and verification tools for one-dimensional Mott variable-range
//! hopping: random environments, conductance networks, effective resistance,
//! the constant-speed, variable-speed and trap random walks, and direct
//! simulation of the sub-diffusive scaling limit.

pub mod cli;
pub mod env;
pub mod error;
pub mod graph;
pub mod limit;
pub mod network;
pub mod plot;
pub mod resistance;
pub mod rng;
pub mod solver;
pub mod stats;
pub mod walk;

pub use error::{MottError, Result};
