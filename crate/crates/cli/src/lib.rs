//! Command-line front end: `render`, `depth`, `fuse`, `eval` and the
//! end-to-end `pipeline`.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;

pub use args::Cli;
pub use commands::run;
pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
