//! Experiment harness: synthetic data generation, prior training, bandit
//! runs and analysis exports, driven by one TOML config per experiment.

pub mod commands;
pub mod config;

pub use config::{ConfigError, RunConfig};
