//! Simulator and verification toolkit for an infinite system of independent
//! one-dimensional random walks in random environment started from a Poisson
//! field.
//!
//! The crate samples reproducible random environments, builds the deep-valley
//! decomposition of the associated random potential, evolves Poisson particle
//! fields under the quenched law with two cross-validating engines plus an
//! exact law-propagation oracle, and measures the localization, migration and
//! renewal observables that the decomposition predicts.

pub mod acceptance;
pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod experiments;
pub mod observables;
pub mod particles;
pub mod report;
pub mod rng;
pub mod valleys;

pub use error::{Result, SinaiError};
