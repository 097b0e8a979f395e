//! Conformally Hamiltonian and contact kinetic dynamics.

pub mod brackets;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod hierarchy;
pub mod kinetic_density;
pub mod kinetic_momentum;
pub mod lifts;
pub mod particle;
pub mod polynomial;
pub mod runner;

pub use error::{Error, Result};
