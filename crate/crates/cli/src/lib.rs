//! Command-line front end: CSV ingestion, the observational-data edge
//! pipeline, run manifests, and subcommand dispatch.

pub mod cli;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;

pub use cli::run;
pub use error::CliError;
