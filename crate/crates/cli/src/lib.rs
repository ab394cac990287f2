//! Command-line front end: CSV ingestion, fitting, cross-validation, additive
//! models, simulation and scaling runs, with JSON or long-format CSV output.

pub mod args;
pub mod commands;
pub mod data;
pub mod error;
pub mod output;

pub use args::RunConfig;
pub use commands::run;
pub use data::{ingest_csv, write_dataset, Ingested};
pub use error::{CliError, Result};
