//! Command-line front end for the placement engine: analytic tables,
//! simulations over seed sweeps, host sizing and dataset listing.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use cli::{execute, Cli};
pub use error::{CliError, EXIT_RUNTIME, EXIT_USAGE};
