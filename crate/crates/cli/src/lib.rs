//! Experiment runner: configuration, command execution, reports and the
//! acceptance suite.

pub mod accept;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::execute;
pub use config::{Command, ExperimentConfig, Overrides, Run};
pub use error::CliError;
pub use output::{Artifact, Outcome};
