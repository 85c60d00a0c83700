//! Command-line front end: CSV ingestion, JSON experiment configs, the
//! subcommand drivers and result/plot emission.

pub mod config;
pub mod experiment;
pub mod ingest;
pub mod output;
