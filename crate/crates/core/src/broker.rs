//! In-process partitioned message log.
//!
//! A [`Broker`] holds named topics. Each topic is split into partitions with
//! dense offsets starting at 0. Consumer groups keep, per partition, a fetch
//! position (advanced by `consume`) and a committed offset (the next offset
//! still to be processed, advanced by `commit`). Records below the smallest
//! committed offset of all registered groups are evicted; producers block
//! once a partition buffers `capacity` records.

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use bytes::Bytes;
use parking_lot::{Condvar, Mutex, RwLock};

use crate::clock;
use crate::workload::{EventSink, SinkAck, SinkError};

pub const DEFAULT_PARTITION_CAPACITY: usize = 1 << 20;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum BrokerError {
    #[error("topic `{0}` already exists")]
    TopicExists(String),
    #[error("unknown topic `{0}`")]
    UnknownTopic(String),
    #[error("partition count must be at least 1")]
    InvalidPartitionCount,
    #[error("topic `{topic}` has no partition {partition}")]
    UnknownPartition { topic: String, partition: usize },
    #[error("group `{group}` is not registered on topic `{topic}`")]
    UnknownGroup { group: String, topic: String },
    #[error("topic `{0}` is closed")]
    TopicClosed(String),
    #[error("commit of offset {requested} is behind the committed offset {committed}")]
    OffsetRegression { committed: u64, requested: u64 },
    #[error("commit of offset {requested} is beyond the partition head {head}")]
    OffsetBeyondHead { head: u64, requested: u64 },
    #[error("partition {partition} of `{topic}` is already owned within group `{group}`")]
    PartitionOwned {
        group: String,
        topic: String,
        partition: usize,
    },
}

/// A record as stored in a partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredRecord {
    pub offset: u64,
    /// Append time, microseconds on the process clock.
    pub ingest_ts_us: u64,
    pub payload: Bytes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProduceAck {
    pub partition: usize,
    pub offset: u64,
    pub ingest_ts_us: u64,
    pub blocked: Duration,
}

#[derive(Debug, Clone, Copy)]
struct Cursor {
    committed: u64,
    position: u64,
    owner: Option<u64>,
}

#[derive(Debug, Default)]
struct PartitionLog {
    base_offset: u64,
    next_offset: u64,
    last_ingest_us: u64,
    records: VecDeque<StoredRecord>,
    cursors: HashMap<String, Cursor>,
}

impl PartitionLog {
    fn evict(&mut self) -> bool {
        let Some(floor) = self.cursors.values().map(|c| c.committed).min() else {
            return false;
        };
        let before = self.base_offset;
        while self.base_offset < floor {
            self.records.pop_front();
            self.base_offset += 1;
        }
        self.base_offset > before
    }

    fn read(&self, from: u64, max_batch: usize) -> Vec<StoredRecord> {
        let start = (from - self.base_offset) as usize;
        self.records
            .range(start..)
            .take(max_batch)
            .cloned()
            .collect()
    }
}

#[derive(Debug)]
struct Partition {
    log: Mutex<PartitionLog>,
    not_full: Condvar,
    not_empty: Condvar,
}

/// One named, partitioned log.
#[derive(Debug)]
pub struct Topic {
    name: String,
    capacity: usize,
    partitions: Box<[Partition]>,
    closed: AtomicBool,
    round_robin: AtomicUsize,
}

/// FNV-1a over the key's decimal representation.
pub fn key_hash(key: u64) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut digits = [0u8; 20];
    let mut i = digits.len();
    let mut k = key;
    loop {
        i -= 1;
        digits[i] = b'0' + (k % 10) as u8;
        k /= 10;
        if k == 0 {
            break;
        }
    }
    digits[i..]
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

static NEXT_OWNER: AtomicU64 = AtomicU64::new(1);

impl Topic {
    fn new(name: &str, partition_count: usize, capacity: usize) -> Self {
        Self {
            name: name.to_string(),
            capacity: capacity.max(1),
            partitions: (0..partition_count)
                .map(|_| Partition {
                    log: Mutex::new(PartitionLog::default()),
                    not_full: Condvar::new(),
                    not_empty: Condvar::new(),
                })
                .collect(),
            closed: AtomicBool::new(false),
            round_robin: AtomicUsize::new(0),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn partition_count(&self) -> usize {
        self.partitions.len()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn is_closed(&self) -> bool {
        self.closed.load(Ordering::Acquire)
    }

    /// Partition a key is routed to.
    pub fn partition_for(&self, key: u64) -> usize {
        (key_hash(key) % self.partitions.len() as u64) as usize
    }

    fn partition(&self, partition: usize) -> Result<&Partition, BrokerError> {
        self.partitions
            .get(partition)
            .ok_or_else(|| BrokerError::UnknownPartition {
                topic: self.name.clone(),
                partition,
            })
    }

    /// Keyed records go to `hash(key) mod partitions`, unkeyed ones
    /// round-robin. Blocks while the target partition is full.
    pub fn produce(&self, key: Option<u64>, record: Bytes) -> Result<ProduceAck, BrokerError> {
        let partition = match key {
            Some(k) => self.partition_for(k),
            None => self.round_robin.fetch_add(1, Ordering::Relaxed) % self.partitions.len(),
        };
        self.produce_to(partition, record)
    }

    /// Appends to an explicit partition.
    pub fn produce_to(&self, partition: usize, record: Bytes) -> Result<ProduceAck, BrokerError> {
        let p = self.partition(partition)?;
        let mut log = p.log.lock();
        let mut blocked_since = None;
        while !self.is_closed() && log.records.len() >= self.capacity {
            blocked_since.get_or_insert_with(Instant::now);
            p.not_full.wait(&mut log);
        }
        if self.is_closed() {
            return Err(BrokerError::TopicClosed(self.name.clone()));
        }
        let ingest_ts_us = clock::now_us().max(log.last_ingest_us);
        let offset = log.next_offset;
        log.records.push_back(StoredRecord {
            offset,
            ingest_ts_us,
            payload: record,
        });
        log.next_offset += 1;
        log.last_ingest_us = ingest_ts_us;
        drop(log);
        p.not_empty.notify_all();
        Ok(ProduceAck {
            partition,
            offset,
            ingest_ts_us,
            blocked: blocked_since.map_or(Duration::ZERO, |t| t.elapsed()),
        })
    }

    /// Registers `group` on every partition, starting at the oldest retained
    /// record. Registering twice is a no-op.
    pub fn register_group(&self, group: &str) {
        for p in self.partitions.iter() {
            let mut log = p.log.lock();
            let base = log.base_offset;
            log.cursors.entry(group.to_string()).or_insert(Cursor {
                committed: base,
                position: base,
                owner: None,
            });
        }
    }

    fn with_cursor<T>(
        &self,
        group: &str,
        partition: usize,
        f: impl FnOnce(&mut PartitionLog, &Partition) -> Result<T, BrokerError>,
    ) -> Result<T, BrokerError> {
        let p = self.partition(partition)?;
        let mut log = p.log.lock();
        if !log.cursors.contains_key(group) {
            return Err(BrokerError::UnknownGroup {
                group: group.to_string(),
                topic: self.name.clone(),
            });
        }
        f(&mut log, p)
    }

    fn cursor_checked(
        &self,
        log: &PartitionLog,
        group: &str,
        partition: usize,
        owner: Option<u64>,
    ) -> Result<Cursor, BrokerError> {
        let cursor = *log
            .cursors
            .get(group)
            .ok_or_else(|| BrokerError::UnknownGroup {
                group: group.to_string(),
                topic: self.name.clone(),
            })?;
        if cursor.owner.is_some() && cursor.owner != owner {
            return Err(BrokerError::PartitionOwned {
                group: group.to_string(),
                topic: self.name.clone(),
                partition,
            });
        }
        Ok(cursor)
    }

    fn consume_as(
        &self,
        group: &str,
        partition: usize,
        max_batch: usize,
        owner: Option<u64>,
        wait: Option<Duration>,
    ) -> Result<Vec<StoredRecord>, BrokerError> {
        let p = self.partition(partition)?;
        let mut log = p.log.lock();
        let cursor = self.cursor_checked(&log, group, partition, owner)?;
        if let Some(timeout) = wait {
            if cursor.position == log.next_offset && !self.is_closed() {
                // a timeout or unrelated wakeup just yields an empty batch
                let _ = p.not_empty.wait_for(&mut log, timeout);
                self.cursor_checked(&log, group, partition, owner)?;
            }
        }
        Ok(take(&mut log, group, max_batch))
    }

    /// Up to `max_batch` records after the group's fetch position.
    pub fn consume(
        &self,
        group: &str,
        partition: usize,
        max_batch: usize,
    ) -> Result<Vec<StoredRecord>, BrokerError> {
        self.consume_as(group, partition, max_batch, None, None)
    }

    fn commit_as(
        &self,
        group: &str,
        partition: usize,
        offset: u64,
        owner: Option<u64>,
    ) -> Result<(), BrokerError> {
        self.with_cursor(group, partition, |log, p| {
            self.cursor_checked(log, group, partition, owner)?;
            let head = log.next_offset;
            let cursor = log.cursors.get_mut(group).expect("checked");
            if offset > head {
                return Err(BrokerError::OffsetBeyondHead {
                    head,
                    requested: offset,
                });
            }
            if offset < cursor.committed {
                return Err(BrokerError::OffsetRegression {
                    committed: cursor.committed,
                    requested: offset,
                });
            }
            cursor.committed = offset;
            cursor.position = cursor.position.max(offset);
            if log.evict() {
                p.not_full.notify_all();
            }
            Ok(())
        })
    }

    /// Marks every offset below `offset` as processed by `group`.
    pub fn commit(&self, group: &str, partition: usize, offset: u64) -> Result<(), BrokerError> {
        self.commit_as(group, partition, offset, None)
    }

    /// `head - committed` per partition.
    pub fn lag(&self, group: &str) -> Result<Vec<u64>, BrokerError> {
        (0..self.partitions.len())
            .map(|i| {
                self.with_cursor(group, i, |log, _| {
                    Ok(log.next_offset - log.cursors[group].committed)
                })
            })
            .collect()
    }

    /// Next offset to be assigned in each partition.
    pub fn heads(&self) -> Vec<u64> {
        self.partitions
            .iter()
            .map(|p| p.log.lock().next_offset)
            .collect()
    }

    pub fn total_records(&self) -> u64 {
        self.heads().iter().sum()
    }

    /// Records still buffered in each partition.
    pub fn buffered(&self) -> Vec<usize> {
        self.partitions
            .iter()
            .map(|p| p.log.lock().records.len())
            .collect()
    }

    /// Rejects further produces and wakes every blocked caller.
    pub fn close(&self) {
        self.closed.store(true, Ordering::Release);
        for p in self.partitions.iter() {
            let _guard = p.log.lock();
            p.not_full.notify_all();
            p.not_empty.notify_all();
        }
    }

    /// Claims exclusive consumption of one partition within `group`.
    pub fn assign(
        self: &Arc<Self>,
        group: &str,
        partition: usize,
    ) -> Result<PartitionLease, BrokerError> {
        let owner = NEXT_OWNER.fetch_add(1, Ordering::Relaxed);
        self.with_cursor(group, partition, |log, _| {
            let cursor = log.cursors.get_mut(group).expect("checked");
            if cursor.owner.is_some() {
                return Err(BrokerError::PartitionOwned {
                    group: group.to_string(),
                    topic: self.name.clone(),
                    partition,
                });
            }
            cursor.owner = Some(owner);
            Ok(())
        })?;
        Ok(PartitionLease {
            topic: self.clone(),
            group: group.to_string(),
            partition,
            owner,
        })
    }
}

fn take(log: &mut PartitionLog, group: &str, max_batch: usize) -> Vec<StoredRecord> {
    let from = log.cursors[group].position;
    let batch = log.read(from, max_batch);
    log.cursors.get_mut(group).expect("registered").position = from + batch.len() as u64;
    batch
}

/// Exclusive consumer handle for one partition; released on drop.
#[derive(Debug)]
pub struct PartitionLease {
    topic: Arc<Topic>,
    group: String,
    partition: usize,
    owner: u64,
}

impl PartitionLease {
    pub fn partition(&self) -> usize {
        self.partition
    }

    pub fn consume(&self, max_batch: usize) -> Result<Vec<StoredRecord>, BrokerError> {
        self.topic.consume_as(
            &self.group,
            self.partition,
            max_batch,
            Some(self.owner),
            None,
        )
    }

    /// Like [`consume`](Self::consume) but waits up to `timeout` for data
    /// when caught up.
    pub fn consume_wait(
        &self,
        max_batch: usize,
        timeout: Duration,
    ) -> Result<Vec<StoredRecord>, BrokerError> {
        self.topic.consume_as(
            &self.group,
            self.partition,
            max_batch,
            Some(self.owner),
            Some(timeout),
        )
    }

    pub fn commit(&self, offset: u64) -> Result<(), BrokerError> {
        self.topic
            .commit_as(&self.group, self.partition, offset, Some(self.owner))
    }
}

impl Drop for PartitionLease {
    fn drop(&mut self) {
        let mut log = self.topic.partitions[self.partition].log.lock();
        if let Some(c) = log.cursors.get_mut(&self.group) {
            if c.owner == Some(self.owner) {
                c.owner = None;
            }
        }
    }
}

impl EventSink for Topic {
    fn produce(&self, key: Option<u64>, record: Bytes) -> Result<SinkAck, SinkError> {
        Topic::produce(self, key, record)
            .map(|a| SinkAck {
                ingest_ts_us: a.ingest_ts_us,
                blocked: a.blocked,
            })
            .map_err(|_| SinkError::Closed)
    }
}

/// Registry of topics.
#[derive(Debug, Default)]
pub struct Broker {
    topics: RwLock<HashMap<String, Arc<Topic>>>,
}

impl Broker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_topic(
        &self,
        name: &str,
        partition_count: usize,
        capacity: usize,
    ) -> Result<Arc<Topic>, BrokerError> {
        if partition_count < 1 {
            return Err(BrokerError::InvalidPartitionCount);
        }
        let mut topics = self.topics.write();
        if topics.contains_key(name) {
            return Err(BrokerError::TopicExists(name.to_string()));
        }
        let t = Arc::new(Topic::new(name, partition_count, capacity));
        topics.insert(name.to_string(), t.clone());
        Ok(t)
    }

    pub fn topic(&self, name: &str) -> Result<Arc<Topic>, BrokerError> {
        self.topics
            .read()
            .get(name)
            .cloned()
            .ok_or_else(|| BrokerError::UnknownTopic(name.to_string()))
    }
}

/// Contract shared by the in-process broker and any external broker client.
/// Semantics match the [`Topic`] methods of the same names.
pub trait BrokerAdapter: Send + Sync {
    fn register_group(&self, group: &str, topic: &str) -> Result<(), BrokerError>;
    fn produce(
        &self,
        topic: &str,
        key: Option<u64>,
        record: Bytes,
    ) -> Result<ProduceAck, BrokerError>;
    fn consume(
        &self,
        group: &str,
        topic: &str,
        partition: usize,
        max_batch: usize,
    ) -> Result<Vec<StoredRecord>, BrokerError>;
    fn commit(
        &self,
        group: &str,
        topic: &str,
        partition: usize,
        offset: u64,
    ) -> Result<(), BrokerError>;
    fn lag(&self, group: &str, topic: &str) -> Result<Vec<u64>, BrokerError>;
}

impl BrokerAdapter for Broker {
    fn register_group(&self, group: &str, topic: &str) -> Result<(), BrokerError> {
        self.topic(topic)?.register_group(group);
        Ok(())
    }

    fn produce(
        &self,
        topic: &str,
        key: Option<u64>,
        record: Bytes,
    ) -> Result<ProduceAck, BrokerError> {
        self.topic(topic)?.produce(key, record)
    }

    fn consume(
        &self,
        group: &str,
        topic: &str,
        partition: usize,
        max_batch: usize,
    ) -> Result<Vec<StoredRecord>, BrokerError> {
        self.topic(topic)?.consume(group, partition, max_batch)
    }

    fn commit(
        &self,
        group: &str,
        topic: &str,
        partition: usize,
        offset: u64,
    ) -> Result<(), BrokerError> {
        self.topic(topic)?.commit(group, partition, offset)
    }

    fn lag(&self, group: &str, topic: &str) -> Result<Vec<u64>, BrokerError> {
        self.topic(topic)?.lag(group)
    }
}
