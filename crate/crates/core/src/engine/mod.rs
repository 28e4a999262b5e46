//! Reference processing pipelines.

mod pipeline;
mod window;

pub use pipeline::{
    run_pipeline, AugmentedEvent, EngineError, EngineHandle, EngineStats, EngineTaps,
    PipelineDefinition, WindowSlot, DEFAULT_MAX_BATCH,
};
pub use window::{assign_windows, WindowMeta, WindowResult, WindowState};

use serde::{Deserialize, Serialize};

/// Threshold for the CPU-intensive pipeline: 50 °C, the middle of the
/// default generation range.
pub const DEFAULT_THRESHOLD_F: f64 = 122.0;
pub const DEFAULT_WINDOW_LEN_MS: u64 = 5000;
pub const DEFAULT_WINDOW_SLIDE_MS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    /// Forwards records untouched.
    PassThrough,
    /// Parses, converts to Fahrenheit and flags readings above a threshold.
    CpuIntensive,
    /// Averages temperature per sensor over sliding windows.
    MemoryIntensive,
}

impl PipelineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::PassThrough => "pass_through",
            PipelineKind::CpuIntensive => "cpu_intensive",
            PipelineKind::MemoryIntensive => "memory_intensive",
        }
    }
}

/// Which clock assigns events to windows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeDomain {
    /// Arrival time at the worker.
    #[default]
    Processing,
    /// The event's creation timestamp.
    Event,
}

#[derive(Debug, thiserror::Error, Clone, Copy, PartialEq)]
#[error("temperature {0} is not finite")]
pub struct NonFiniteTemperature(pub f64);

pub fn to_fahrenheit(temperature_c: f64) -> Result<f64, NonFiniteTemperature> {
    if temperature_c.is_finite() {
        Ok(temperature_c * 9.0 / 5.0 + 32.0)
    } else {
        Err(NonFiniteTemperature(temperature_c))
    }
}

/// Strictly above the threshold.
pub fn threshold_detect(temperature_f: f64, threshold_f: f64) -> bool {
    temperature_f > threshold_f
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversion() {
        assert_eq!(to_fahrenheit(0.0), Ok(32.0));
        assert_eq!(to_fahrenheit(100.0), Ok(212.0));
        assert_eq!(to_fahrenheit(-40.0), Ok(-40.0));
        assert!(to_fahrenheit(f64::NAN).is_err());
        assert!(to_fahrenheit(f64::NEG_INFINITY).is_err());
    }

    #[test]
    fn threshold_is_strict() {
        assert!(threshold_detect(212.0, 122.0));
        assert!(!threshold_detect(122.0, 122.0));
        assert!(!threshold_detect(32.0, 122.0));
    }
}
