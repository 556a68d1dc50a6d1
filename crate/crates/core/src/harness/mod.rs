//! Run orchestration: configuration, output artifacts and the command-line
//! front end.

pub mod cli;
pub mod commands;
pub mod config;
pub mod output;

pub use commands::CommandError;
pub use config::{AblationGrid, RunConfig, OUTPUT_ROOT_VAR};
pub use output::{AblationRow, RunManifest, ABLATION_HEADER, AGGREGATE_HEADER, SUMMARY_HEADER};
