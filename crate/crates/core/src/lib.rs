//! Scattering-equivalent Hamiltonians from finite-rank Cayley generators.

pub mod cayley;
pub mod cli;
pub mod cluster;
pub mod config;
pub mod error;
pub mod grid;
pub mod operator;
pub mod partition;
pub mod potential;
pub mod scattering;
pub mod three_body;
pub mod transforms;
pub mod variational;

pub use error::{Error, Result};
