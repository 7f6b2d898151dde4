//! Command-line front end: argument definitions, dispatch and reports.

pub mod commands;
pub mod formats;
pub mod report;

pub use commands::{run, Cli, Defaults};
pub use report::{Report, Status};
