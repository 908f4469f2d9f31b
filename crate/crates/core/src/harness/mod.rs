//! Experiment harness: configuration files, runners, metrics CSVs and the CLI.

pub mod cli;
pub mod config;
pub mod io;
pub mod metrics;
pub mod run;
