//! Experiment runner for the `bnnhmc` command.
//!
//! Every experiment is one strict JSON config executed into a run directory
//! holding the resolved config, sample stores, metric tables and a manifest.

pub mod commands;
pub mod config;
pub mod output;
pub mod runner;
pub mod sweep;

pub use config::{parse_config, ExperimentConfig, Kind};
pub use output::{Manifest, MetricRow};
pub use runner::run_experiment;
