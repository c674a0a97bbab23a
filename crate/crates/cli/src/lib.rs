//! Experiment runner for encrypted GCN inference.

pub mod config;
pub mod error;
pub mod fixtures;
pub mod report;
pub mod runner;

pub use config::{BackendKind, ExperimentConfig, ParamPreset, SweepGrid};
pub use error::{CliError, Result};
pub use report::RunReport;
