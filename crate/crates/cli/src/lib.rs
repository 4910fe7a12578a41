//! Experiment runner for extremes of random walks in random sceneries:
//! config parsing, estimator orchestration, reports and the acceptance suite.

pub mod config;
pub mod report;
pub mod runner;
pub mod selftest;

pub use config::{parse_config, ConfigError, Estimator, ExperimentConfig};
pub use report::{emit_report, ExperimentReport, Format};
pub use runner::{run_experiment, Command};
