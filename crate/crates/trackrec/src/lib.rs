//! Files, run directories and the command line around `trackrec-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod run;

pub use config::RunConfig;
pub use error::{CliError, Result};
pub use trackrec_core;
