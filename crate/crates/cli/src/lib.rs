//! Configuration, dispatch and plot-data plumbing behind the `pe3d` binary.

pub mod config;
pub mod plotdata;
pub mod run;

pub use config::{parse_config, ConfigError, ConfigErrors, RunConfig};
pub use run::{run, CliError, Command};
