//! Scenario files, subcommands and CSV output for `qndsim`.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use config::{parse_config, parse_sweep_config, RunConfig, SweepConfig};
pub use error::CliError;
