//! Deterministic simulator and verification harness for local-update
//! federated minimax optimization.
//!
//! The crate simulates `n` clients running descent/ascent steps on private
//! iterates with periodic server averaging, on synthetic saddle problems
//! whose inner maximizers and envelope functions have closed forms. Around
//! the simulators sit independent verification oracles (finite differences,
//! brute-force inner maximization, rate fitting) and an experiment harness
//! with a named acceptance suite that checks the expected convergence
//! behavior empirically.
//!
//! Everything is reproducible: randomness flows through counter-based
//! streams addressed by `(seed, stream id, counter)`, server reductions use
//! a fixed summation order, and outputs depend only on the configuration.

pub mod algorithms;
pub mod cli;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod oracles;
pub mod problems;
pub mod rng;
pub mod schedule;
pub mod vector;

pub use error::{Error, Result};
pub use vector::Vector;
