//! Command-line harness: scenario files, subcommands and the acceptance battery.

pub mod battery;
pub mod commands;
pub mod error;
pub mod expr;
pub mod report;
pub mod scenario_file;

pub use error::{CliError, CliResult};
