//! Generator instances: each runs its own schedule on its own thread and
//! pushes encoded events into a shared sink.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use bytes::Bytes;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GeneratorPlan, Schedule, WorkloadSpec};
use crate::clock::Clock;
use crate::event::{EventError, SensorEvent};
use crate::metrics::{latency_of, LatencyKind, TapRecorder, Timestamps};

#[derive(Debug, thiserror::Error, Clone, Copy, PartialEq, Eq)]
pub enum SinkError {
    #[error("sink closed")]
    Closed,
}

/// Result of a successful append.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SinkAck {
    /// Time the sink stamped on the record, microseconds since the epoch.
    pub ingest_ts_us: u64,
    /// Time the call spent blocked on a full buffer.
    pub blocked: Duration,
}

/// Destination for generated records. Must tolerate concurrent producers.
pub trait EventSink: Send + Sync {
    /// Appends one record, blocking while the sink has no room.
    fn produce(&self, key: Option<u64>, record: Bytes) -> Result<SinkAck, SinkError>;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorStats {
    pub events_emitted: u64,
    pub bytes_emitted: u64,
    pub wall_time_ms: f64,
    pub achieved_rate_eps: f64,
    pub backpressure_time_ms: f64,
}

impl GeneratorStats {
    fn finish(&mut self, wall: Duration) {
        self.wall_time_ms = wall.as_secs_f64() * 1e3;
        self.achieved_rate_eps = if self.wall_time_ms > 0.0 {
            self.events_emitted as f64 / (self.wall_time_ms / 1e3)
        } else {
            0.0
        };
    }
}

/// Per-instance stats plus their merge.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GeneratorReport {
    pub instances: Vec<GeneratorStats>,
    pub aggregate: GeneratorStats,
}

impl GeneratorReport {
    fn from_instances(instances: Vec<GeneratorStats>) -> Self {
        let mut aggregate = GeneratorStats::default();
        let mut wall = 0.0f64;
        for s in &instances {
            aggregate.events_emitted += s.events_emitted;
            aggregate.bytes_emitted += s.bytes_emitted;
            aggregate.backpressure_time_ms += s.backpressure_time_ms;
            wall = wall.max(s.wall_time_ms);
        }
        aggregate.finish(Duration::from_secs_f64(wall / 1e3));
        Self {
            instances,
            aggregate,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GeneratorError {
    #[error("sink closed after {} events", partial.aggregate.events_emitted)]
    SinkClosed { partial: GeneratorReport },
    #[error(transparent)]
    Encoding(#[from] EventError),
}

/// Optional instrumentation and control for [`run_generator`].
#[derive(Default, Clone)]
pub struct RunOptions {
    /// One recorder per instance for the generator tap.
    pub generator_taps: Vec<TapRecorder>,
    /// One recorder per instance for the broker ingest tap (driver latency).
    pub broker_in_taps: Vec<TapRecorder>,
    /// Raised to stop all instances early.
    pub stop: Option<Arc<AtomicBool>>,
}

/// Draws one event with a uniform sensor id and a uniform temperature in
/// `[min_temp_c, max_temp_c]`, quantized to the one-decimal wire precision.
pub fn generate_event_in<R: Rng + ?Sized>(
    rng: &mut R,
    num_sensors: u64,
    (min_temp_c, max_temp_c): (f64, f64),
    clock: &dyn Clock,
) -> SensorEvent {
    let raw = if max_temp_c > min_temp_c {
        rng.gen_range(min_temp_c..=max_temp_c)
    } else {
        min_temp_c
    };
    let temperature_c = ((raw * 10.0).round() / 10.0).clamp(min_temp_c, max_temp_c);
    SensorEvent {
        created_at: clock.now_ms(),
        sensor_id: rng.gen_range(0..num_sensors.max(1)),
        temperature_c,
    }
}

/// [`generate_event_in`] over the default range of 0 to 100 °C.
pub fn generate_event<R: Rng + ?Sized>(
    rng: &mut R,
    num_sensors: u64,
    clock: &dyn Clock,
) -> SensorEvent {
    generate_event_in(rng, num_sensors, (0.0, 100.0), clock)
}

struct Instance<'a> {
    index: usize,
    rate_eps: u64,
    plan: &'a GeneratorPlan,
    spec: &'a WorkloadSpec,
    event_size: usize,
    duration: Duration,
    start: Instant,
    gen_tap: Option<TapRecorder>,
    in_tap: Option<TapRecorder>,
    stop: Option<Arc<AtomicBool>>,
}

impl Instance<'_> {
    fn stopped(&self) -> bool {
        self.stop
            .as_ref()
            .is_some_and(|s| s.load(Ordering::Relaxed))
    }

    fn run(
        mut self,
        sink: &dyn EventSink,
        clock: &dyn Clock,
    ) -> Result<GeneratorStats, (GeneratorStats, GeneratorError)> {
        let seed = self.plan.seed_base.wrapping_add(self.index as u64);
        let schedule = Schedule::new(self.spec, seed, self.rate_eps, self.spec.peak_rate_eps());
        // event contents draw from a stream independent of the schedule's
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let range = (self.spec.min_temp_c, self.spec.max_temp_c);
        let mut stats = GeneratorStats::default();
        let mut blocked = Duration::ZERO;
        let duration_ms = self.duration.as_millis() as u64;

        let outcome = 'outer: {
            for tick in schedule.until(duration_ms) {
                if self.stopped() {
                    break;
                }
                sleep_until(self.start + Duration::from_millis(tick.offset_ms));
                for _ in 0..tick.count {
                    let e = generate_event_in(&mut rng, self.spec.num_sensors, range, clock);
                    let mut buf = Vec::with_capacity(self.event_size);
                    if let Err(err) = e.encode_into(self.event_size, &mut buf) {
                        break 'outer Err(GeneratorError::Encoding(err));
                    }
                    let len = buf.len() as u64;
                    let ack = match sink.produce(Some(e.sensor_id), Bytes::from(buf)) {
                        Ok(ack) => ack,
                        Err(SinkError::Closed) => {
                            break 'outer Err(GeneratorError::SinkClosed {
                                partial: GeneratorReport::default(),
                            })
                        }
                    };
                    blocked += ack.blocked;
                    stats.events_emitted += 1;
                    stats.bytes_emitted += len;
                    if let Some(t) = self.gen_tap.as_mut() {
                        t.record(len);
                    }
                    if let Some(t) = self.in_tap.as_mut() {
                        t.record(len);
                        if t.sample() {
                            let stamps = Timestamps {
                                created_us: e.created_at * 1000,
                                broker_ingest_us: ack.ingest_ts_us,
                                ..Timestamps::default()
                            };
                            t.record_latency(latency_of(LatencyKind::Driver, &stamps));
                        }
                    }
                }
            }
            if !self.stopped() {
                sleep_until(self.start + self.duration);
            }
            Ok(())
        };

        stats.backpressure_time_ms = blocked.as_secs_f64() * 1e3;
        stats.finish(self.start.elapsed());
        match outcome {
            Ok(()) => Ok(stats),
            Err(e) => Err((stats, e)),
        }
    }
}

fn sleep_until(deadline: Instant) {
    let now = Instant::now();
    if deadline > now {
        thread::sleep(deadline - now);
    }
}

/// Runs every instance of `plan` concurrently for `duration_s` seconds.
///
/// On sink closure the remaining instances are stopped and the partial
/// report travels inside [`GeneratorError::SinkClosed`].
pub fn run_generator(
    plan: &GeneratorPlan,
    spec: &WorkloadSpec,
    sink: &dyn EventSink,
    duration_s: f64,
    event_size: usize,
    clock: &dyn Clock,
    opts: RunOptions,
) -> Result<GeneratorReport, GeneratorError> {
    if duration_s <= 0.0 {
        let instances = vec![GeneratorStats::default(); plan.instance_count];
        return Ok(GeneratorReport::from_instances(instances));
    }
    let stop = opts.stop.clone().unwrap_or_default();
    let duration = Duration::from_secs_f64(duration_s);
    let start = Instant::now();

    let results: Vec<_> = thread::scope(|s| {
        let handles: Vec<_> = plan
            .instance_rates_eps
            .iter()
            .enumerate()
            .map(|(index, &rate_eps)| {
                let inst = Instance {
                    index,
                    rate_eps,
                    plan,
                    spec,
                    event_size,
                    duration,
                    start,
                    gen_tap: opts.generator_taps.get(index).cloned(),
                    in_tap: opts.broker_in_taps.get(index).cloned(),
                    stop: Some(stop.clone()),
                };
                let stop = stop.clone();
                thread::Builder::new()
                    .name(format!("generator-{index}"))
                    .spawn_scoped(s, move || {
                        let r = inst.run(sink, clock);
                        if r.is_err() {
                            stop.store(true, Ordering::Relaxed);
                        }
                        r
                    })
                    .expect("spawn generator thread")
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("generator thread panicked"))
            .collect()
    });

    let mut first_err = None;
    let instances = results
        .into_iter()
        .map(|r| match r {
            Ok(s) => s,
            Err((s, e)) => {
                first_err.get_or_insert(e);
                s
            }
        })
        .collect();
    let report = GeneratorReport::from_instances(instances);
    match first_err {
        None => Ok(report),
        Some(GeneratorError::SinkClosed { .. }) => {
            Err(GeneratorError::SinkClosed { partial: report })
        }
        Some(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::{FixedClock, SystemClock};
    use crate::workload::plan_generators;
    use parking_lot::Mutex;
    use std::sync::atomic::AtomicU64;

    #[derive(Default)]
    struct CollectSink {
        records: Mutex<Vec<(Option<u64>, Bytes)>>,
        close_after: Option<u64>,
        seen: AtomicU64,
    }

    impl EventSink for CollectSink {
        fn produce(&self, key: Option<u64>, record: Bytes) -> Result<SinkAck, SinkError> {
            let n = self.seen.fetch_add(1, Ordering::SeqCst);
            if self.close_after.is_some_and(|c| n >= c) {
                return Err(SinkError::Closed);
            }
            self.records.lock().push((key, record));
            Ok(SinkAck {
                ingest_ts_us: crate::clock::now_us(),
                blocked: Duration::ZERO,
            })
        }
    }

    #[test]
    fn single_sensor() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let e = generate_event(&mut rng, 1, &FixedClock(5));
            assert_eq!(e.sensor_id, 0);
            assert_eq!(e.created_at, 5);
        }
    }

    #[test]
    fn temperatures_in_range_and_quantized() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10_000 {
            let e = generate_event(&mut rng, 4, &FixedClock(1));
            assert!((0.0..=100.0).contains(&e.temperature_c));
            let tenths = e.temperature_c * 10.0;
            assert_eq!(tenths, tenths.round());
        }
    }

    #[test]
    fn sensor_ids_uniform() {
        // Binomial(10_000, 1/8): mean 1250, sigma = sqrt(10_000 * 1/8 * 7/8) ~ 33.07
        let sigma = (10_000.0f64 * 0.125 * 0.875).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0u32; 8];
        for _ in 0..10_000 {
            counts[generate_event(&mut rng, 8, &FixedClock(1)).sensor_id as usize] += 1;
        }
        for c in counts {
            assert!((f64::from(c) - 1250.0).abs() <= 4.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn zero_duration() {
        let plan = plan_generators(1000, 500).unwrap();
        let sink = CollectSink::default();
        let r = run_generator(
            &plan,
            &WorkloadSpec::constant(1000),
            &sink,
            0.0,
            64,
            &SystemClock,
            RunOptions::default(),
        )
        .unwrap();
        assert_eq!(r.aggregate.events_emitted, 0);
        assert_eq!(r.instances.len(), 2);
        assert!(sink.records.lock().is_empty());
    }

    #[test]
    fn emits_exact_schedule_count() {
        let spec = WorkloadSpec {
            num_sensors: 8,
            ..WorkloadSpec::constant(20_000)
        };
        let plan = plan_generators(20_000, 7_000).unwrap();
        let sink = CollectSink::default();
        let r = run_generator(
            &plan,
            &spec,
            &sink,
            0.5,
            40,
            &SystemClock,
            RunOptions::default(),
        )
        .unwrap();
        let expected: u64 = plan
            .instance_rates_eps
            .iter()
            .map(|&rate| {
                Schedule::new(&spec, 0, rate, 20_000)
                    .until(500)
                    .map(|t| t.count)
                    .sum::<u64>()
            })
            .sum();
        assert_eq!(r.aggregate.events_emitted, expected);
        assert!(expected >= 9_997);
        let recs = sink.records.lock();
        assert_eq!(recs.len() as u64, expected);
        assert!(recs.iter().all(|(_, b)| b.len() == 40));
        assert_eq!(r.aggregate.bytes_emitted, 40 * expected);
        assert!(r.aggregate.wall_time_ms >= 500.0);
    }

    #[test]
    fn sink_closed_mid_run() {
        let spec = WorkloadSpec::constant(10_000);
        let plan = plan_generators(10_000, 500_000).unwrap();
        let sink = CollectSink {
            close_after: Some(100),
            ..Default::default()
        };
        match run_generator(
            &plan,
            &spec,
            &sink,
            5.0,
            32,
            &SystemClock,
            RunOptions::default(),
        ) {
            Err(GeneratorError::SinkClosed { partial }) => {
                assert_eq!(partial.aggregate.events_emitted, 100);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
