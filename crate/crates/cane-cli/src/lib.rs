//! Experiment harness around `cane-core`: trace and model files, scenario
//! configs, session CSV / CDF emission, and the `cane` command-line tool.

pub mod cli;
pub mod config;
pub mod experiment;
pub mod model_io;
pub mod trace_io;

pub use cli::run;
