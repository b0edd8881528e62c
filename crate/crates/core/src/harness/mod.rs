//! Experiment configuration, suites and the command-line front end.

pub mod cli;
pub mod config;
pub mod suite;

pub use config::{provenance, ExperimentConfig};
pub use suite::{run_experiment_suite, run_experiment_suite_with, ExperimentReport, MetricRow, Suite};
