//! Benchmark harness for stream-processing pipelines.
//!
//! Synthetic sensor events are generated at controlled rates, pushed through
//! an in-process partitioned log into one of three reference pipelines, and
//! measured at four tap points. Experiments are described by a single YAML
//! file, expanded into a run matrix, and executed locally or as SLURM jobs.

pub mod broker;
pub mod clock;
pub mod config;
pub mod engine;
pub mod event;
pub mod metrics;
pub mod orchestrator;
pub mod postprocess;
pub mod workload;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
