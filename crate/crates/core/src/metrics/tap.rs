use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crossbeam_utils::CachePadded;

use super::histogram::{AtomicHistogram, LatencyHistogram};
use super::{LatencyKind, NegativeLatency, TapName};

const DEFAULT_SHARDS: usize = 32;

#[derive(Debug, Default)]
struct Shard {
    events: AtomicU64,
    bytes: AtomicU64,
    negative: AtomicU64,
    hist: AtomicHistogram,
}

#[derive(Debug)]
struct Tap {
    name: TapName,
    shards: Box<[CachePadded<Shard>]>,
}

/// Merged view of one tap's shards.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TapTotals {
    pub events: u64,
    pub bytes: u64,
    pub negative_latency: u64,
    pub histogram: LatencyHistogram,
}

impl Tap {
    fn totals(&self) -> TapTotals {
        let mut t = TapTotals::default();
        for s in self.shards.iter() {
            t.events += s.events.load(Ordering::Relaxed);
            t.bytes += s.bytes.load(Ordering::Relaxed);
            t.negative_latency += s.negative.load(Ordering::Relaxed);
            s.hist.load_into(&mut t.histogram);
        }
        t
    }
}

/// All taps of one run.
#[derive(Debug, Clone)]
pub struct MetricsRegistry {
    taps: [Arc<Tap>; 4],
    sample_every: u64,
}

impl Default for MetricsRegistry {
    fn default() -> Self {
        Self::new(1)
    }
}

impl MetricsRegistry {
    /// `sample_every` = N records latency for one event in N.
    pub fn new(sample_every: u64) -> Self {
        Self::with_shards(sample_every, DEFAULT_SHARDS)
    }

    pub fn with_shards(sample_every: u64, shards: usize) -> Self {
        let tap = |name| {
            Arc::new(Tap {
                name,
                shards: (0..shards.max(1))
                    .map(|_| CachePadded::new(Shard::default()))
                    .collect(),
            })
        };
        Self {
            taps: TapName::ALL.map(tap),
            sample_every: sample_every.max(1),
        }
    }

    fn tap(&self, name: TapName) -> &Arc<Tap> {
        &self.taps[name as usize]
    }

    /// A recorder writing into the shard owned by `worker`.
    pub fn recorder(&self, name: TapName, worker: usize) -> TapRecorder {
        let tap = self.tap(name).clone();
        let shard = worker % tap.shards.len();
        TapRecorder {
            tap,
            shard,
            sample_every: self.sample_every,
            seen: 0,
        }
    }

    pub fn totals(&self, name: TapName) -> TapTotals {
        self.tap(name).totals()
    }

    pub fn negative_latency_flags(&self, kind: LatencyKind) -> u64 {
        self.totals(kind.tap()).negative_latency
    }
}

/// Hot-path handle for one worker. Recording never blocks or allocates.
#[derive(Debug, Clone)]
pub struct TapRecorder {
    tap: Arc<Tap>,
    shard: usize,
    sample_every: u64,
    seen: u64,
}

impl TapRecorder {
    pub fn name(&self) -> TapName {
        self.tap.name
    }

    /// Counts one event of `bytes` bytes.
    #[inline]
    pub fn record(&mut self, bytes: u64) {
        let s = &self.tap.shards[self.shard];
        s.events.fetch_add(1, Ordering::Relaxed);
        s.bytes.fetch_add(bytes, Ordering::Relaxed);
    }

    /// Whether the current event should have its latency measured.
    #[inline]
    pub fn sample(&mut self) -> bool {
        self.seen += 1;
        self.seen.is_multiple_of(self.sample_every)
    }

    /// Adds a latency observation; negative ones are counted as flags.
    #[inline]
    pub fn record_latency(&mut self, latency: Result<u64, NegativeLatency>) {
        let s = &self.tap.shards[self.shard];
        match latency {
            Ok(us) => s.hist.record(us),
            Err(_) => {
                s.negative.fetch_add(1, Ordering::Relaxed);
            }
        }
    }
}
