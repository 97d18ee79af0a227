//! Config-driven experiment runner on top of `scatter-core`.

pub mod config;
pub mod output;
pub mod recipes;

pub use config::{load, parse, ConfigError, ExperimentConfig, LoadedConfig};
pub use recipes::{exit, run_experiment, Outcome, RECIPES};
