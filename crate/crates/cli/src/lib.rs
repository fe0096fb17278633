//! Command-line front end: configuration, data loading and the four commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{FeatureFiles, RunConfig};
pub use error::{CliError, CliResult};
