//! Experiment configs, result bundles and the command implementations behind the CLI.

pub mod bundle;
pub mod commands;
pub mod config;

pub use commands::{cmd_compare, cmd_sample, cmd_verify, CommandOutput, Outcome, Overrides, CHECK_NAMES};
pub use config::{ExperimentConfig, Manifest};
