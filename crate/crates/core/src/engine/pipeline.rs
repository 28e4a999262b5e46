//! Pipeline workers.
//!
//! Worker `i` owns every input partition `p` with `p % parallelism == i`,
//! together with the keyed state of the sensors routed there. Workers share
//! only the output topic and the tap counters.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU8, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use bytes::Bytes;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::window::{WindowMeta, WindowResult, WindowState};
use super::{threshold_detect, to_fahrenheit, PipelineKind, TimeDomain};
use crate::broker::{BrokerError, PartitionLease, StoredRecord, Topic};
use crate::clock;
use crate::event::{deserialize_event, peek_created_at, serialize_event, SensorEvent};
use crate::metrics::{latency_of, LatencyKind, MetricsRegistry, TapName, TapRecorder, Timestamps};

pub const DEFAULT_MAX_BATCH: usize = 512;
const IDLE_WAIT: Duration = Duration::from_millis(2);

const RUNNING: u8 = 0;
const DRAIN: u8 = 1;
const ABORT: u8 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineDefinition {
    pub kind: PipelineKind,
    pub parallelism: usize,
    pub threshold_f: f64,
    pub window_len_ms: u64,
    pub window_slide_ms: u64,
    pub parse_in_passthrough: bool,
    pub time_domain: TimeDomain,
}

impl PipelineDefinition {
    pub fn new(kind: PipelineKind, parallelism: usize) -> Self {
        Self {
            kind,
            parallelism,
            threshold_f: super::DEFAULT_THRESHOLD_F,
            window_len_ms: super::DEFAULT_WINDOW_LEN_MS,
            window_slide_ms: super::DEFAULT_WINDOW_SLIDE_MS,
            parse_in_passthrough: false,
            time_domain: TimeDomain::Processing,
        }
    }

    fn check(&self, partitions: usize) -> Result<(), EngineError> {
        if self.parallelism < 1 {
            return Err(EngineError::InvalidDefinition(
                "parallelism must be at least 1".into(),
            ));
        }
        if self.parallelism > partitions {
            return Err(EngineError::PartitionAssignment {
                parallelism: self.parallelism,
                partitions,
            });
        }
        if self.kind == PipelineKind::MemoryIntensive
            && (self.window_slide_ms == 0
                || !self.window_len_ms.is_multiple_of(self.window_slide_ms))
        {
            return Err(EngineError::InvalidDefinition(format!(
                "window slide {} ms must divide window length {} ms",
                self.window_slide_ms, self.window_len_ms
            )));
        }
        if !self.threshold_f.is_finite() {
            return Err(EngineError::InvalidDefinition(
                "threshold must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Output of the CPU-intensive pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedEvent {
    pub event: SensorEvent,
    pub temperature_f: f64,
    pub flagged: bool,
}

impl AugmentedEvent {
    /// `[ts,id,t,tf,flag]`; the padding of the input is dropped.
    pub fn encode(&self) -> Vec<u8> {
        let t10 = (self.event.temperature_c * 10.0).round() as i64;
        let sign = if t10 < 0 { "-" } else { "" };
        format!(
            "[{},{},{sign}{}.{},{:?},{}]",
            self.event.created_at,
            self.event.sensor_id,
            t10.unsigned_abs() / 10,
            t10.unsigned_abs() % 10,
            self.temperature_f,
            self.flagged
        )
        .into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        let (ts, id, t, tf, flagged): (u64, u64, f64, f64, bool) =
            serde_json::from_slice(bytes).ok()?;
        Some(Self {
            event: SensorEvent {
                created_at: ts,
                sensor_id: id,
                temperature_c: t,
            },
            temperature_f: tf,
            flagged,
        })
    }
}

/// Input events per `(sensor, slide-aligned slot)`; every event in a slot
/// belongs to the same set of windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WindowSlot {
    pub sensor_id: u64,
    pub slot_start_ms: u64,
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineStats {
    pub per_worker_processed: Vec<u64>,
    pub records_in: u64,
    pub bytes_in: u64,
    pub records_out: u64,
    pub bytes_out: u64,
    pub decode_errors: u64,
    pub late_events: u64,
    pub wall_time_ms: f64,
    #[serde(skip)]
    pub window_slots: Vec<WindowSlot>,
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("parallelism {parallelism} exceeds the {partitions} input partitions")]
    PartitionAssignment {
        parallelism: usize,
        partitions: usize,
    },
    #[error("invalid pipeline definition: {0}")]
    InvalidDefinition(String),
    #[error(transparent)]
    Broker(#[from] BrokerError),
    #[error("engine did not drain in time")]
    DrainTimeout { stats: Box<EngineStats> },
}

/// Where workers record their tap observations.
#[derive(Debug, Clone)]
pub struct EngineTaps {
    pub registry: MetricsRegistry,
}

#[derive(Debug, Default)]
struct WorkerStats {
    processed: u64,
    bytes_in: u64,
    records_out: u64,
    bytes_out: u64,
    decode_errors: u64,
    late_events: u64,
    slots: HashMap<(u64, u64), u64>,
}

struct Worker {
    def: PipelineDefinition,
    leases: Vec<PartitionLease>,
    out: Arc<Topic>,
    proc_tap: Option<TapRecorder>,
    out_tap: Option<TapRecorder>,
    window: Option<WindowState>,
    partition_max_ts: Vec<Option<u64>>,
    next_flush_ms: u64,
    max_batch: usize,
    stats: WorkerStats,
    id: usize,
    owners: Arc<Mutex<HashMap<u64, usize>>>,
    seen_keys: HashSet<u64>,
}

impl Worker {
    fn emit(
        &mut self,
        partition: Option<usize>,
        key: Option<u64>,
        payload: Bytes,
        created_ms: Option<u64>,
    ) -> Result<(), EngineError> {
        let len = payload.len() as u64;
        let ack = match partition {
            Some(p) => self
                .out
                .produce_to(p % self.out.partition_count(), payload)?,
            None => self.out.produce(key, payload)?,
        };
        self.stats.records_out += 1;
        self.stats.bytes_out += len;
        if let Some(tap) = self.out_tap.as_mut() {
            tap.record(len);
            if let Some(created) = created_ms {
                if tap.sample() {
                    let ts = Timestamps {
                        created_us: created * 1000,
                        broker_egress_us: ack.ingest_ts_us,
                        ..Timestamps::default()
                    };
                    tap.record_latency(latency_of(LatencyKind::EndToEnd, &ts));
                }
            }
        }
        Ok(())
    }

    fn record_processing(&mut self, bytes: u64, ingest_us: u64) {
        if let Some(tap) = self.proc_tap.as_mut() {
            tap.record(bytes);
            if tap.sample() {
                let ts = Timestamps {
                    proc_ingest_us: ingest_us,
                    proc_egress_us: clock::now_us(),
                    ..Timestamps::default()
                };
                tap.record_latency(latency_of(LatencyKind::Processing, &ts));
            }
        }
    }

    fn check_key_owner(&mut self, key: u64) {
        if cfg!(debug_assertions) && self.seen_keys.insert(key) {
            let owner = *self.owners.lock().entry(key).or_insert(self.id);
            debug_assert_eq!(owner, self.id, "sensor {key} state touched by two workers");
        }
    }

    fn process_batch(
        &mut self,
        lease_idx: usize,
        batch: &[StoredRecord],
    ) -> Result<(), EngineError> {
        let partition = self.leases[lease_idx].partition();
        let ingest_us = clock::now_us();
        let now_ms = ingest_us / 1000;
        for r in batch {
            let len_in = r.payload.len() as u64;
            self.stats.processed += 1;
            self.stats.bytes_in += len_in;
            match self.def.kind {
                PipelineKind::PassThrough => {
                    let payload = if self.def.parse_in_passthrough {
                        match deserialize_event(&r.payload)
                            .and_then(|e| serialize_event(&e, r.payload.len()))
                        {
                            Ok(rec) => rec.bytes,
                            Err(_) => {
                                self.stats.decode_errors += 1;
                                continue;
                            }
                        }
                    } else {
                        r.payload.clone()
                    };
                    let created = peek_created_at(&r.payload);
                    self.record_processing(len_in, ingest_us);
                    self.emit(Some(partition), None, payload, created)?;
                }
                PipelineKind::CpuIntensive => {
                    let Ok(e) = deserialize_event(&r.payload) else {
                        self.stats.decode_errors += 1;
                        continue;
                    };
                    let Ok(tf) = to_fahrenheit(e.temperature_c) else {
                        self.stats.decode_errors += 1;
                        continue;
                    };
                    let out = AugmentedEvent {
                        event: e,
                        temperature_f: tf,
                        flagged: threshold_detect(tf, self.def.threshold_f),
                    };
                    let payload = Bytes::from(out.encode());
                    self.record_processing(len_in, ingest_us);
                    self.emit(
                        Some(partition),
                        Some(e.sensor_id),
                        payload,
                        Some(e.created_at),
                    )?;
                }
                PipelineKind::MemoryIntensive => {
                    let Ok(e) = deserialize_event(&r.payload) else {
                        self.stats.decode_errors += 1;
                        continue;
                    };
                    self.check_key_owner(e.sensor_id);
                    let ts = match self.def.time_domain {
                        TimeDomain::Event => e.created_at,
                        TimeDomain::Processing => now_ms,
                    };
                    let meta = WindowMeta {
                        newest_created_ms: e.created_at,
                        newest_ingest_us: ingest_us,
                    };
                    let window = self
                        .window
                        .as_mut()
                        .expect("memory pipeline has window state");
                    if window.update_at(&e, ts, meta) {
                        let slot = ts / self.def.window_slide_ms * self.def.window_slide_ms;
                        *self.stats.slots.entry((e.sensor_id, slot)).or_default() += 1;
                    } else {
                        self.stats.late_events += 1;
                    }
                    let max = &mut self.partition_max_ts[lease_idx];
                    *max = Some(max.map_or(ts, |m| m.max(ts)));
                    self.record_processing(len_in, ingest_us);
                }
            }
        }
        Ok(())
    }

    fn emit_windows(&mut self, closed: Vec<(WindowResult, WindowMeta)>) -> Result<(), EngineError> {
        for (result, meta) in closed {
            self.emit(
                None,
                Some(result.sensor_id),
                Bytes::from(result.encode()),
                Some(meta.newest_created_ms),
            )?;
        }
        Ok(())
    }

    /// Advances the watermark after a pass over every owned partition.
    fn end_of_round(&mut self) -> Result<(), EngineError> {
        let Some(window) = self.window.as_mut() else {
            return Ok(());
        };
        let watermark = match self.def.time_domain {
            TimeDomain::Processing => Some(clock::now_ms()),
            TimeDomain::Event => self.partition_max_ts.iter().flatten().min().copied(),
        };
        if let Some(wm) = watermark {
            if wm >= self.next_flush_ms {
                let closed = window.flush_with_meta(wm);
                self.next_flush_ms = (wm / self.def.window_slide_ms + 1) * self.def.window_slide_ms;
                self.emit_windows(closed)?;
            }
        }
        Ok(())
    }

    fn consume_and_process(
        &mut self,
        idx: usize,
        wait: Option<Duration>,
    ) -> Result<bool, EngineError> {
        let batch = match wait {
            None => self.leases[idx].consume(self.max_batch)?,
            Some(t) => self.leases[idx].consume_wait(self.max_batch, t)?,
        };
        let Some(last) = batch.last().map(|r| r.offset) else {
            return Ok(false);
        };
        self.process_batch(idx, &batch)?;
        self.leases[idx].commit(last + 1)?;
        Ok(true)
    }

    fn run(mut self, control: &AtomicU8) -> Result<WorkerStats, EngineError> {
        let mut idle_turn = 0usize;
        let drained = loop {
            let mode = control.load(Ordering::Acquire);
            if mode == ABORT {
                break false;
            }
            let mut progressed = false;
            for idx in 0..self.leases.len() {
                progressed |= self.consume_and_process(idx, None)?;
            }
            self.end_of_round()?;
            if !progressed {
                if mode == DRAIN {
                    break true;
                }
                let idx = idle_turn % self.leases.len();
                idle_turn += 1;
                self.consume_and_process(idx, Some(IDLE_WAIT))?;
            }
        };
        if drained {
            if let Some(window) = self.window.as_mut() {
                let closed = window.flush_all();
                self.emit_windows(closed)?;
            }
        }
        Ok(self.stats)
    }
}

/// A running engine.
pub struct EngineHandle {
    control: Arc<AtomicU8>,
    workers: Vec<JoinHandle<Result<WorkerStats, EngineError>>>,
    started: Instant,
}

impl EngineHandle {
    /// Validates `def`, registers `group` on the input topic, claims the
    /// partitions, and starts one thread per worker.
    pub fn start(
        def: &PipelineDefinition,
        input: &Arc<Topic>,
        output: &Arc<Topic>,
        group: &str,
        taps: Option<&EngineTaps>,
    ) -> Result<Self, EngineError> {
        def.check(input.partition_count())?;
        input.register_group(group);
        let mut leases: Vec<Vec<PartitionLease>> =
            (0..def.parallelism).map(|_| Vec::new()).collect();
        for p in 0..input.partition_count() {
            leases[p % def.parallelism].push(input.assign(group, p)?);
        }
        let control = Arc::new(AtomicU8::new(RUNNING));
        let owners = Arc::new(Mutex::new(HashMap::new()));
        let started = Instant::now();
        let workers = leases
            .into_iter()
            .enumerate()
            .map(|(id, leases)| {
                let n = leases.len();
                let worker = Worker {
                    def: def.clone(),
                    leases,
                    out: output.clone(),
                    proc_tap: taps.map(|t| t.registry.recorder(TapName::Processor, id)),
                    out_tap: taps.map(|t| t.registry.recorder(TapName::BrokerOut, id)),
                    window: (def.kind == PipelineKind::MemoryIntensive)
                        .then(|| WindowState::new(def.window_len_ms, def.window_slide_ms)),
                    partition_max_ts: vec![None; n],
                    next_flush_ms: 0,
                    max_batch: DEFAULT_MAX_BATCH,
                    stats: WorkerStats::default(),
                    id,
                    owners: owners.clone(),
                    seen_keys: HashSet::new(),
                };
                let control = control.clone();
                thread::Builder::new()
                    .name(format!("engine-worker-{id}"))
                    .spawn(move || {
                        let r = worker.run(&control);
                        if r.is_err() {
                            control.store(ABORT, Ordering::Release);
                        }
                        r
                    })
                    .expect("spawn engine worker")
            })
            .collect();
        Ok(Self {
            control,
            workers,
            started,
        })
    }

    /// Asks workers to finish once every owned partition is caught up.
    pub fn request_drain(&self) {
        let _ = self
            .control
            .compare_exchange(RUNNING, DRAIN, Ordering::AcqRel, Ordering::Acquire);
    }

    fn collect(self) -> Result<EngineStats, EngineError> {
        let mut stats = EngineStats::default();
        let mut slots: HashMap<(u64, u64), u64> = HashMap::new();
        let mut first_err = None;
        for h in self.workers {
            match h.join().expect("engine worker panicked") {
                Ok(w) => {
                    stats.per_worker_processed.push(w.processed);
                    stats.records_in += w.processed;
                    stats.bytes_in += w.bytes_in;
                    stats.records_out += w.records_out;
                    stats.bytes_out += w.bytes_out;
                    stats.decode_errors += w.decode_errors;
                    stats.late_events += w.late_events;
                    for (k, c) in w.slots {
                        *slots.entry(k).or_default() += c;
                    }
                }
                Err(e) => {
                    stats.per_worker_processed.push(0);
                    first_err.get_or_insert(e);
                }
            }
        }
        stats.window_slots = slots
            .into_iter()
            .map(|((sensor_id, slot_start_ms), count)| WindowSlot {
                sensor_id,
                slot_start_ms,
                count,
            })
            .collect();
        stats.window_slots.sort();
        stats.wall_time_ms = self.started.elapsed().as_secs_f64() * 1e3;
        match first_err {
            Some(e) => Err(e),
            None => Ok(stats),
        }
    }

    /// Drains and stops. With a timeout, workers still busy at the deadline
    /// are aborted and the partial stats returned in
    /// [`EngineError::DrainTimeout`].
    pub fn drain(self, timeout: Option<Duration>) -> Result<EngineStats, EngineError> {
        self.request_drain();
        let deadline = timeout.map(|t| Instant::now() + t);
        let mut timed_out = false;
        while !self.workers.iter().all(|h| h.is_finished()) {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                self.control.store(ABORT, Ordering::Release);
                timed_out = true;
                break;
            }
            thread::sleep(Duration::from_millis(1));
        }
        let stats = self.collect()?;
        if timed_out {
            Err(EngineError::DrainTimeout {
                stats: Box::new(stats),
            })
        } else {
            Ok(stats)
        }
    }

    /// Stops immediately without flushing open windows.
    pub fn abort(self) -> Result<EngineStats, EngineError> {
        self.control.store(ABORT, Ordering::Release);
        self.collect()
    }
}

/// Runs `def` over everything currently in `input` and returns once all of
/// it has been processed.
pub fn run_pipeline(
    def: &PipelineDefinition,
    input: &Arc<Topic>,
    output: &Arc<Topic>,
    taps: Option<&EngineTaps>,
) -> Result<EngineStats, EngineError> {
    EngineHandle::start(def, input, output, "engine", taps)?.drain(None)
}
