//! Experiment runner for `galet-core`: configuration files, trace and
//! summary formats, parallel sweeps and the `galet` command line.

pub mod config;
pub mod experiment;
pub mod summary;
pub mod trace;
pub mod verify;

pub use config::{ConfigError, ExperimentConfig, OutputFormat};
pub use experiment::{run_experiment, BenchError, ExitStatus, ExperimentOutcome};
pub use summary::{summarize_dir, Summary};
pub use trace::TraceFile;
