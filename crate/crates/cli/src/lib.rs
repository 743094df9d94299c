//! Library side of the `derfleet` command-line tool: configuration loading
//! and the subcommands, kept out of `main` so they can be tested directly.

pub mod commands;
pub mod config;

pub use config::{Format, Overrides, RunConfig};
