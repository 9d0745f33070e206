//! Experiment driver for the low-rank integrators: TOML-configured convergence
//! and conservation studies written to CSV.

pub mod cli;
pub mod config;
pub mod output;
pub mod slope;
pub mod study;
