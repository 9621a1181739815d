//! Command line and HTTP service over the arcross pipeline store.

pub mod commands;
pub mod error;
pub mod server;
pub mod workflow;

pub use commands::{run, Cli};
pub use error::CliError;
