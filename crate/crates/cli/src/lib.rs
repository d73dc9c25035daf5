//! Data ingestion, file formats and the `careerwalk` command-line tool
//! built on the [`careerwalk`] core.

#![forbid(unsafe_code)]
#![warn(missing_docs)]

pub mod commands;
pub mod data;
mod error;
pub mod formats;

pub use commands::{run, Cli};
pub use error::{Error, Result};
