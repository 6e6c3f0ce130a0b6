//! Batch experiments: configuration, the five runs, and their files.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{ConfigError, ExperimentConfig};
pub use runner::{run, RunError, RunOutput, Subcommand, Verdict};
