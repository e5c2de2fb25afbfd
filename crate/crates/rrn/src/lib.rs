//! File formats, experiment drivers and the command-line harness around `rrn-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod csv_io;
pub mod error;
pub mod experiments;

pub use error::{Result, RrnError};
