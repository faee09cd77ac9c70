//! Integer trading-trajectory optimisation compiled to QUBO / Ising form,
//! with a simulated quantum-annealer pipeline and benchmark metrics.

pub mod cli;
pub mod encoding;
pub mod error;
pub mod hardware;
pub mod metrics;
pub mod model;
pub mod provenance;
pub mod qubo;
pub mod seed;
pub mod solvers;

pub use error::{Error, Result};
