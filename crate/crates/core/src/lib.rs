//! Empirical copulas of pseudo-observations, the copula mapping and its
//! Hadamard derivative, and a seeded Monte Carlo harness around them.

pub mod cli;
pub mod config;
pub mod copulas;
pub mod empirical;
pub mod error;
pub mod grid;
pub mod mapping;
pub mod mc;
pub mod models;
pub mod optim;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
