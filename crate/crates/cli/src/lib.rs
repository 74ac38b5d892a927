//! Experiment harness for the UDS scheduler: configuration, parameter sweeps
//! and CSV output. The `uds` binary is a thin wrapper around this crate.

pub mod commands;
pub mod config;
pub mod runner;

pub use config::{ConfigFile, ExperimentSpec, WorkflowSource};
pub use runner::{run_sweep, write_outputs, RunKey, RunRecord, SUMMARY_HEADER};
