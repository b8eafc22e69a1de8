//! Command-line front end: instance files, the built-in registry, check
//! batteries and run orchestration.

pub mod cli;
pub mod error;
pub mod expr;
pub mod instance;
pub mod lemmas;
pub mod registry;
pub mod run;

pub use error::{CliError, Result};
