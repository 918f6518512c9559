//! Scenario-driven experiment runner for the withholding-attack model.
//!
//! Each subcommand reads a scenario file, evaluates it at every sweep point
//! and writes `<id>-<command>.csv` plus a JSON mirror to the output
//! directory. See [`scenario`] for the file format.

pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;
pub mod tables;
pub mod validate;

use clap::Parser;

pub use commands::{execute, Command, CommonArgs, Outcome};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "bmpaw",
    version,
    about = "Withholding-attack reward model experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}
