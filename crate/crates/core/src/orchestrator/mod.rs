//! Experiment orchestration: environment detection, resource sizing, SLURM
//! script emission and the lifecycle of a single run.

mod env;
mod manifest;
mod resources;
mod run;
mod sbatch;

pub use env::{
    detect_environment, detect_from, DetectedResources, ExecutionEnvironment, ExecutionMode,
};
pub use manifest::{
    EngineSummary, GeneratorSummary, LatencySummary, RunManifest, RunStatus, TapSummary,
    MANIFEST_FILE, RESOLVED_CONFIG_FILE, WINDOW_SLOTS_FILE,
};
pub use resources::{compute_resources, interactive_guard, ResourceRequest, Shortfall};
pub use run::{execute_run, run_experiment, ExperimentOptions, ModeChoice, RunOutcome, RunSummary};
pub use sbatch::{emit_chain, emit_sbatch, write_chain, DEPENDENCY_PLACEHOLDER, SUBMIT_SCRIPT};

use std::path::PathBuf;

use crate::config::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("requested resources exceed cluster limits: {}", .0.join("; "))]
    ResourceOverCap(Vec<String>),
    #[error("allocation too small: {}", .0.iter().map(|s| s.to_string()).collect::<Vec<_>>().join("; "))]
    InsufficientAllocation(Vec<Shortfall>),
    #[error("{component} failed to start: {message}\n--- log tail ---\n{log_tail}")]
    ComponentStartupFailure {
        component: &'static str,
        message: String,
        log_tail: String,
    },
    #[error("run {run_id} failed: {message}")]
    RunFailed { run_id: String, message: String },
    #[error("engine of run {run_id} did not drain within {timeout_s} s; partial results kept")]
    DrainTimeout { run_id: String, timeout_s: u64 },
    #[error("no run with id {0} in this experiment")]
    UnknownRunId(String),
    #[error("job submission failed: {0}")]
    Submission(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl OrchestratorError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| OrchestratorError::Io { path, source }
    }

    /// 1 invalid input, 2 runtime failure, 3 environment.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(ConfigError::Io { .. }) => 1,
            Self::Config(_) | Self::ResourceOverCap(_) | Self::UnknownRunId(_) => 1,
            Self::ComponentStartupFailure { .. }
            | Self::RunFailed { .. }
            | Self::DrainTimeout { .. }
            | Self::Io { .. } => 2,
            Self::InsufficientAllocation(_) | Self::Submission(_) => 3,
        }
    }
}
