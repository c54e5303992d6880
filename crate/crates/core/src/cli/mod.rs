//! Experiment harness behind the `statrom` binary.

pub mod commands;
pub mod config;
pub mod csv;
pub mod plot;

pub use commands::{run, Command};
pub use config::{ExperimentConfig, GridCell, RawConfig};
