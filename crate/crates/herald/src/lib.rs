//! Std companion of `herald-core`: TOML configuration, a parallel
//! deterministic runner, CSV and SVG outputs, and the command-line driver.

pub mod cli;
pub mod config;
pub mod experiments;
pub mod output;
pub mod plot;
pub mod runner;

pub use config::{Experiment, ExperimentConfig, Overrides, ValidationReport};
pub use runner::Runner;
