//! File formats, reports and the command-line pipeline around
//! `mdsplit-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod format;
pub mod io;
pub mod report;

pub use error::{CliError, Result};
