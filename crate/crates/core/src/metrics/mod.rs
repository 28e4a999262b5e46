//! Instrumentation: tap counters, latency histograms, periodic snapshots
//! and their CSV series.

mod histogram;
mod process;
mod series;
mod snapshot;
mod tap;

pub use histogram::{bucket_index, bucket_range, HistogramError, LatencyHistogram, BUCKET_COUNT};
pub use process::{ProcProbe, ProcessProbe, ProcessSample};
pub use series::{read_rows, read_series, write_series, MetricSeries, Sample, SeriesError};
pub use snapshot::{
    latency_file, throughput_file, LatencyRow, ProcessRow, SnapshotHandle, SnapshotRows,
    Snapshotter, ThroughputRow, DEFAULT_SNAPSHOT_INTERVAL_MS, MIN_SNAPSHOT_INTERVAL_MS,
    PROCESS_FILE,
};
pub use tap::{MetricsRegistry, TapRecorder, TapTotals};

use serde::{Deserialize, Serialize};

/// Bytes per megabyte in every MB/s figure.
pub const BYTES_PER_MB: f64 = 1e6;

/// The four instrumented points along the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TapName {
    Generator,
    BrokerIn,
    Processor,
    BrokerOut,
}

impl TapName {
    pub const ALL: [TapName; 4] = [
        TapName::Generator,
        TapName::BrokerIn,
        TapName::Processor,
        TapName::BrokerOut,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TapName::Generator => "generator",
            TapName::BrokerIn => "broker_in",
            TapName::Processor => "processor",
            TapName::BrokerOut => "broker_out",
        }
    }

    /// The latency class measured where this tap sits, if any.
    pub fn latency_kind(self) -> Option<LatencyKind> {
        match self {
            TapName::Generator => None,
            TapName::BrokerIn => Some(LatencyKind::Driver),
            TapName::Processor => Some(LatencyKind::Processing),
            TapName::BrokerOut => Some(LatencyKind::EndToEnd),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyKind {
    /// Creation to ingestion at the first broker.
    Driver,
    /// Ingestion at the processor to egress from the processor.
    Processing,
    /// Creation to ingestion at the second broker.
    EndToEnd,
}

impl LatencyKind {
    pub const ALL: [LatencyKind; 3] = [
        LatencyKind::Driver,
        LatencyKind::Processing,
        LatencyKind::EndToEnd,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LatencyKind::Driver => "driver",
            LatencyKind::Processing => "processing",
            LatencyKind::EndToEnd => "end_to_end",
        }
    }

    pub fn tap(self) -> TapName {
        match self {
            LatencyKind::Driver => TapName::BrokerIn,
            LatencyKind::Processing => TapName::Processor,
            LatencyKind::EndToEnd => TapName::BrokerOut,
        }
    }
}

/// Timestamps of one event's journey, microseconds on the process clock.
/// Fields a caller does not know stay zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Timestamps {
    pub created_us: u64,
    pub broker_ingest_us: u64,
    pub proc_ingest_us: u64,
    pub proc_egress_us: u64,
    pub broker_egress_us: u64,
}

/// The end of an interval preceded its start: clocks disagree.
#[derive(Debug, thiserror::Error, Clone, Copy, PartialEq, Eq)]
#[error("negative {} latency of {by_us} µs", kind.as_str())]
pub struct NegativeLatency {
    pub kind: LatencyKind,
    pub by_us: u64,
}

pub fn latency_of(kind: LatencyKind, ts: &Timestamps) -> Result<u64, NegativeLatency> {
    let (start, end) = match kind {
        LatencyKind::Driver => (ts.created_us, ts.broker_ingest_us),
        LatencyKind::Processing => (ts.proc_ingest_us, ts.proc_egress_us),
        LatencyKind::EndToEnd => (ts.created_us, ts.broker_egress_us),
    };
    end.checked_sub(start).ok_or_else(|| NegativeLatency {
        kind,
        by_us: start - end,
    })
}
