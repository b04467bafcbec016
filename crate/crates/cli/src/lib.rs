//! Config parsing and subcommands behind the `compete` binary.

pub mod commands;
pub mod config;

pub use commands::{cmd_run, cmd_sweep, cmd_verify, CliError, Overrides, EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME};
pub use config::{parse_config, parse_config_str, ConfigErrors, RunConfig, SweepAxis};
