//! Experiment harness: metric definitions, configuration ingestion, the six
//! experiment recipes, result persistence and plot emission.

pub mod config;
pub mod csvio;
pub mod experiments;
pub mod metrics;
pub mod svg;

pub use config::{ExperimentConfig, ExperimentKind};
pub use experiments::{classical_chain_minimum, run_experiment};
pub use metrics::{energy_errors, instantaneous_infidelity, target_fidelity};
