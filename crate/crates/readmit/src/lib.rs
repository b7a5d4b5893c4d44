//! File formats, checkpoints, parallel runners and the command-line
//! surface around `readmit-core`.

pub mod checkpoint;
pub mod cli;
pub mod commands;
pub mod error;
pub mod io;
pub mod manifest;
pub mod runner;

pub use error::{CliError, CliResult};
