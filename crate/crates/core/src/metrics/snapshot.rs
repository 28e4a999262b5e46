//! Periodic snapshots of every tap.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::series::{Sample, SeriesError};
use super::{LatencyKind, MetricsRegistry, ProcessProbe, TapName, BYTES_PER_MB};
use crate::clock;

pub const DEFAULT_SNAPSHOT_INTERVAL_MS: u64 = 1000;
pub const MIN_SNAPSHOT_INTERVAL_MS: u64 = 100;
const FLUSH_EVERY: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputRow {
    pub ts_ms: u64,
    pub events_total: u64,
    pub bytes_total: u64,
    pub events_per_s: f64,
    pub mb_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub ts_ms: u64,
    pub kind: LatencyKind,
    pub count: u64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub max_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessRow {
    pub ts_ms: u64,
    pub cpu_percent: f64,
    pub rss_bytes: u64,
    pub reclaim_count: u64,
    pub reclaim_time_ms: f64,
    pub source: String,
}

impl Sample for ThroughputRow {
    fn ts_ms(&self) -> u64 {
        self.ts_ms
    }
}

impl Sample for LatencyRow {
    fn ts_ms(&self) -> u64 {
        self.ts_ms
    }
}

impl Sample for ProcessRow {
    fn ts_ms(&self) -> u64 {
        self.ts_ms
    }
}

/// One snapshot: a row per tap, per latency kind, and one process row.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRows {
    pub throughput: Vec<(TapName, ThroughputRow)>,
    pub latency: Vec<(LatencyKind, LatencyRow)>,
    pub process: ProcessRow,
}

/// Turns cumulative tap counters into interval rates.
pub struct Snapshotter {
    registry: MetricsRegistry,
    probe: Box<dyn ProcessProbe>,
    prev_ts_ms: u64,
    prev: [(u64, u64); 4],
}

impl Snapshotter {
    pub fn new(registry: MetricsRegistry, probe: Box<dyn ProcessProbe>, start_ts_ms: u64) -> Self {
        Self {
            registry,
            probe,
            prev_ts_ms: start_ts_ms,
            prev: [(0, 0); 4],
        }
    }

    /// Rows for the interval ending at `ts_ms`. Timestamps are forced to
    /// strictly increase.
    pub fn snapshot_at(&mut self, ts_ms: u64) -> SnapshotRows {
        let ts_ms = ts_ms.max(self.prev_ts_ms + 1);
        let secs = (ts_ms - self.prev_ts_ms) as f64 / 1e3;
        let mut throughput = Vec::with_capacity(4);
        let mut latency = Vec::with_capacity(3);
        for tap in TapName::ALL {
            let t = self.registry.totals(tap);
            let (pe, pb) = std::mem::replace(&mut self.prev[tap as usize], (t.events, t.bytes));
            throughput.push((
                tap,
                ThroughputRow {
                    ts_ms,
                    events_total: t.events,
                    bytes_total: t.bytes,
                    events_per_s: (t.events - pe) as f64 / secs,
                    mb_per_s: (t.bytes - pb) as f64 / BYTES_PER_MB / secs,
                },
            ));
            if let Some(kind) = tap.latency_kind() {
                let h = &t.histogram;
                let p = |q| h.percentile(q).unwrap_or(0.0);
                latency.push((
                    kind,
                    LatencyRow {
                        ts_ms,
                        kind,
                        count: h.total(),
                        p50_us: p(0.5),
                        p95_us: p(0.95),
                        p99_us: p(0.99),
                        max_us: h.max(),
                    },
                ));
            }
        }
        let s = self.probe.sample();
        self.prev_ts_ms = ts_ms;
        SnapshotRows {
            throughput,
            latency,
            process: ProcessRow {
                ts_ms,
                cpu_percent: s.cpu_percent,
                rss_bytes: s.resident_memory_bytes,
                reclaim_count: s.reclaim_count,
                reclaim_time_ms: s.reclaim_time_ms,
                source: s.source,
            },
        }
    }
}

pub fn throughput_file(tap: TapName) -> String {
    format!("throughput_{}.csv", tap.as_str())
}

pub fn latency_file(kind: LatencyKind) -> String {
    format!("latency_{}.csv", kind.as_str())
}

pub const PROCESS_FILE: &str = "process.csv";

struct Writers {
    dir: PathBuf,
    throughput: Vec<csv::Writer<BufWriter<File>>>,
    latency: Vec<csv::Writer<BufWriter<File>>>,
    process: csv::Writer<BufWriter<File>>,
}

impl Writers {
    fn create(dir: &Path) -> Result<Self, SeriesError> {
        fs::create_dir_all(dir).map_err(|source| SeriesError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let open = |name: String| -> Result<_, SeriesError> {
            let path = dir.join(name);
            let f = File::create(&path).map_err(|source| SeriesError::Io { path, source })?;
            Ok(csv::Writer::from_writer(BufWriter::new(f)))
        };
        Ok(Self {
            dir: dir.to_path_buf(),
            throughput: TapName::ALL
                .iter()
                .map(|&t| open(throughput_file(t)))
                .collect::<Result<_, _>>()?,
            latency: LatencyKind::ALL
                .iter()
                .map(|&k| open(latency_file(k)))
                .collect::<Result<_, _>>()?,
            process: open(PROCESS_FILE.to_string())?,
        })
    }

    fn append(&mut self, rows: &SnapshotRows) -> Result<(), SeriesError> {
        let err = |e| SeriesError::csv(&self.dir, e);
        for (tap, row) in &rows.throughput {
            self.throughput[*tap as usize].serialize(row).map_err(err)?;
        }
        for (kind, row) in &rows.latency {
            self.latency[*kind as usize].serialize(row).map_err(err)?;
        }
        self.process.serialize(&rows.process).map_err(err)
    }

    fn flush(&mut self) -> Result<(), SeriesError> {
        let err = |source| SeriesError::Io {
            path: self.dir.clone(),
            source,
        };
        for w in self.throughput.iter_mut().chain(self.latency.iter_mut()) {
            w.flush().map_err(err)?;
        }
        self.process.flush().map_err(err)?;
        Ok(())
    }
}

/// A snapshotter running on its own thread, writing CSV series into a
/// metrics directory. Recorders are never blocked by it.
pub struct SnapshotHandle {
    stop: mpsc::Sender<()>,
    thread: JoinHandle<Result<usize, SeriesError>>,
}

impl SnapshotHandle {
    pub fn spawn(
        registry: MetricsRegistry,
        probe: Box<dyn ProcessProbe>,
        interval_ms: u64,
        dir: &Path,
    ) -> Result<Self, SeriesError> {
        let mut writers = Writers::create(dir)?;
        let interval = Duration::from_millis(interval_ms.max(MIN_SNAPSHOT_INTERVAL_MS));
        let (stop, rx) = mpsc::channel::<()>();
        let thread = thread::Builder::new()
            .name("snapshotter".into())
            .spawn(move || {
                let mut snap = Snapshotter::new(registry, probe, clock::now_ms());
                let start = Instant::now();
                let mut last_flush = Instant::now();
                let mut rows_written = 0usize;
                for k in 1u32.. {
                    let due = start + interval * k;
                    let wait = due.saturating_duration_since(Instant::now());
                    let last = match rx.recv_timeout(wait) {
                        Err(RecvTimeoutError::Timeout) => false,
                        Ok(()) | Err(RecvTimeoutError::Disconnected) => true,
                    };
                    writers.append(&snap.snapshot_at(clock::now_ms()))?;
                    rows_written += 1;
                    if last || last_flush.elapsed() >= FLUSH_EVERY {
                        writers.flush()?;
                        last_flush = Instant::now();
                    }
                    if last {
                        break;
                    }
                }
                Ok(rows_written)
            })
            .map_err(|source| SeriesError::Io {
                path: dir.to_path_buf(),
                source,
            })?;
        Ok(Self { stop, thread })
    }

    /// Takes a final snapshot, flushes, and returns the number of snapshots.
    pub fn stop(self) -> Result<usize, SeriesError> {
        let _ = self.stop.send(());
        self.thread.join().expect("snapshotter panicked")
    }
}
