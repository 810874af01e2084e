//! Config-driven batch front end: experiment declaration, the four batch
//! commands and all report writers.

pub mod config;
pub mod error;
pub mod expr;
pub mod output;
pub mod run;

pub use error::CliError;
pub use run::{run_command, Command, RunOptions};
