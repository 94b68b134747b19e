//! Configuration, bundled scenarios, orchestration and report output for `horizonctl`.

pub mod commands;
pub mod config;
pub mod report;
pub mod scenarios;

pub use commands::{cmd_oracle, cmd_solve, cmd_sweep, cmd_verify, CliError, CliResult};
pub use config::{ConfigError, RunConfig};
