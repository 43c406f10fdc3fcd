//! Batch experiment runner: JSON configs, seeded runs, checkpoints, transfer
//! between worlds and summary reports.

pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod metrics;
pub mod report;

pub use config::RunConfig;
pub use experiment::{run_experiment, run_transfer, simulate, transfer, HarnessError, Simulation};
