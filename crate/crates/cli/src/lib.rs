//! Command-line front end for the `specnorm` library: problem files, solver
//! runs and certificate, field and gap artifacts.

pub mod commands;
pub mod error;
pub mod files;
pub mod json;
pub mod mm;

pub use commands::{run, Cli};
pub use error::{CliError, Result};
