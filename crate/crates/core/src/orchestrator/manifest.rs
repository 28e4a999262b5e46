use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExecutionMode, OrchestratorError, ResourceRequest};
use crate::engine::{EngineStats, PipelineDefinition};
use crate::metrics::{LatencyKind, MetricsRegistry, TapName};
use crate::workload::GeneratorReport;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved.yaml";
/// Per-(sensor, slot) input counts of the windowed pipeline, under `metrics/`.
pub const WINDOW_SLOTS_FILE: &str = "window_slots.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Degraded,
    Failed,
}

impl RunStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Degraded => "degraded",
            RunStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSummary {
    pub instances: usize,
    pub events_emitted: u64,
    pub bytes_emitted: u64,
    pub achieved_rate_eps: f64,
    pub backpressure_time_ms: f64,
}

impl From<&GeneratorReport> for GeneratorSummary {
    fn from(r: &GeneratorReport) -> Self {
        Self {
            instances: r.instances.len(),
            events_emitted: r.aggregate.events_emitted,
            bytes_emitted: r.aggregate.bytes_emitted,
            achieved_rate_eps: r.aggregate.achieved_rate_eps,
            backpressure_time_ms: r.aggregate.backpressure_time_ms,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineSummary {
    pub per_worker_processed: Vec<u64>,
    pub records_in: u64,
    pub records_out: u64,
    pub decode_errors: u64,
    pub late_events: u64,
    pub wall_time_ms: f64,
    pub drain_timed_out: bool,
    /// Input records left unprocessed at shutdown.
    pub lag_remaining: u64,
}

impl EngineSummary {
    pub fn from_stats(s: &EngineStats, drain_timed_out: bool, lag_remaining: u64) -> Self {
        Self {
            per_worker_processed: s.per_worker_processed.clone(),
            records_in: s.records_in,
            records_out: s.records_out,
            decode_errors: s.decode_errors,
            late_events: s.late_events,
            wall_time_ms: s.wall_time_ms,
            drain_timed_out,
            lag_remaining,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TapSummary {
    pub events: u64,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub count: u64,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub max_us: u64,
    pub negative_flags: u64,
}

/// Written by the control thread only, once at the end of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub experiment_name: String,
    pub repetition: u32,
    pub status: RunStatus,
    pub errors: Vec<String>,
    pub mode: ExecutionMode,
    pub host: String,
    pub version: String,
    pub config_file: String,
    /// SHA-256 of the resolved config file beside this manifest.
    pub config_hash: String,
    pub parameters: BTreeMap<String, String>,
    pub pipeline: PipelineDefinition,
    pub resources: Option<ResourceRequest>,
    pub started_at_ms: u64,
    pub finished_at_ms: u64,
    pub snapshots: usize,
    pub generator: GeneratorSummary,
    pub engine: EngineSummary,
    pub sink_records: u64,
    pub taps: BTreeMap<TapName, TapSummary>,
    pub latency: BTreeMap<LatencyKind, LatencySummary>,
}

impl RunManifest {
    pub fn fill_metrics(&mut self, registry: &MetricsRegistry) {
        for tap in TapName::ALL {
            let t = registry.totals(tap);
            self.taps.insert(
                tap,
                TapSummary {
                    events: t.events,
                    bytes: t.bytes,
                },
            );
        }
        for kind in LatencyKind::ALL {
            let t = registry.totals(kind.tap());
            let h = &t.histogram;
            let p = |q| h.percentile(q).unwrap_or(0.0);
            self.latency.insert(
                kind,
                LatencySummary {
                    count: h.total(),
                    mean_us: h.mean().unwrap_or(0.0),
                    p50_us: p(0.50),
                    p95_us: p(0.95),
                    p99_us: p(0.99),
                    max_us: h.max(),
                    negative_flags: registry.negative_latency_flags(kind),
                },
            );
        }
    }

    pub fn write(&self, run_dir: &Path) -> Result<(), OrchestratorError> {
        let path = run_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(OrchestratorError::io(&path))
    }

    pub fn read(run_dir: &Path) -> std::io::Result<Self> {
        let text = fs::read_to_string(run_dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }
}
