//! Configuration, output files and subcommands of the `smm` binary.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{main_with_args, Cli, Command};
pub use config::RunConfig;
