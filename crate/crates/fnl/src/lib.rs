//! Command-line laboratory for forward relative performance equilibria:
//! configuration parsing, a thread-pool executor, subcommand pipelines and
//! CSV/JSON reports.

pub mod cli;
pub mod config;
pub mod exec;
pub mod manifest;
pub mod report;
pub mod run;
