use std::collections::BTreeSet;
use std::fmt;

use super::RunData;
use crate::engine::{assign_windows, PipelineKind, WindowSlot};
use crate::metrics::{throughput_file, LatencyKind, Sample, TapName, ThroughputRow};

#[derive(Debug, Clone, PartialEq)]
pub enum RunViolation {
    /// Fewer or more events arrived at `to` than left `from`.
    Conservation {
        from: String,
        to: String,
        expected: u64,
        actual: u64,
        delta: i64,
    },
    Latency {
        kind: LatencyKind,
        flags: u64,
    },
    NonMonotonic {
        series: String,
        index: usize,
        ts_ms: u64,
        prev_ms: u64,
    },
    /// A windowed run without the slot counts needed to predict its output.
    MissingWindowSlots,
}

impl fmt::Display for RunViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunViolation::Conservation {
                from,
                to,
                expected,
                actual,
                delta,
            } => write!(f, "conservation: {to} has {actual} events, expected {expected} from {from} (delta {delta})"),
            RunViolation::Latency { kind, flags } => {
                write!(f, "latency: {flags} negative {} latencies", kind.as_str())
            }
            RunViolation::NonMonotonic {
                series,
                index,
                ts_ms,
                prev_ms,
            } => write!(f, "{series}: sample {index} at {ts_ms} ms does not follow {prev_ms} ms"),
            RunViolation::MissingWindowSlots => write!(f, "windowed run has no window slot counts"),
        }
    }
}

/// Distinct `(sensor, window)` pairs the input covers: the number of window
/// results a correct engine emits.
pub fn predicted_windows(slots: &[WindowSlot], window_len_ms: u64, slide_ms: u64) -> u64 {
    let mut windows = BTreeSet::new();
    for s in slots.iter().filter(|s| s.count > 0) {
        for start in assign_windows(s.slot_start_ms, window_len_ms, slide_ms) {
            windows.insert((s.sensor_id, start));
        }
    }
    windows.len() as u64
}

fn monotonic<R: Sample>(series: &str, rows: &[R], out: &mut Vec<RunViolation>) {
    if let Some((index, w)) = rows
        .windows(2)
        .enumerate()
        .find(|(_, w)| w[1].ts_ms() <= w[0].ts_ms())
    {
        out.push(RunViolation::NonMonotonic {
            series: series.to_string(),
            index: index + 1,
            ts_ms: w[1].ts_ms(),
            prev_ms: w[0].ts_ms(),
        });
    }
}

fn final_count(rows: Option<&Vec<ThroughputRow>>) -> u64 {
    rows.and_then(|r| r.last()).map_or(0, |r| r.events_total)
}

fn conserve(from: &str, to: &str, expected: u64, actual: u64, out: &mut Vec<RunViolation>) {
    if expected != actual {
        out.push(RunViolation::Conservation {
            from: from.to_string(),
            to: to.to_string(),
            expected,
            actual,
            delta: actual as i64 - expected as i64,
        });
    }
}

/// Conservation between taps, negative-latency flags and timestamp order.
/// An empty result means the run is clean.
pub fn validate_run(run: &RunData) -> Vec<RunViolation> {
    let mut out = Vec::new();
    let count = |t: TapName| final_count(run.throughput.get(&t));
    let chain = [TapName::Generator, TapName::BrokerIn, TapName::Processor];
    for w in chain.windows(2) {
        conserve(
            w[0].as_str(),
            w[1].as_str(),
            count(w[0]),
            count(w[1]),
            &mut out,
        );
    }
    let def = &run.manifest.pipeline;
    match def.kind {
        PipelineKind::PassThrough | PipelineKind::CpuIntensive => conserve(
            TapName::Processor.as_str(),
            TapName::BrokerOut.as_str(),
            count(TapName::Processor),
            count(TapName::BrokerOut),
            &mut out,
        ),
        PipelineKind::MemoryIntensive => match &run.window_slots {
            Some(slots) => conserve(
                "predicted windows",
                TapName::BrokerOut.as_str(),
                predicted_windows(slots, def.window_len_ms, def.window_slide_ms),
                count(TapName::BrokerOut),
                &mut out,
            ),
            None => out.push(RunViolation::MissingWindowSlots),
        },
    }

    for (kind, l) in &run.manifest.latency {
        if l.negative_flags > 0 {
            out.push(RunViolation::Latency {
                kind: *kind,
                flags: l.negative_flags,
            });
        }
    }

    for (tap, rows) in &run.throughput {
        monotonic(&throughput_file(*tap), rows, &mut out);
    }
    for (kind, rows) in &run.latency {
        monotonic(&crate::metrics::latency_file(*kind), rows, &mut out);
    }
    monotonic(crate::metrics::PROCESS_FILE, &run.process, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predicted_windows_by_enumeration() {
        let slot = |sensor_id, slot_start_ms| WindowSlot {
            sensor_id,
            slot_start_ms,
            count: 1,
        };
        // one slot at 10 s lies in five 5 s windows sliding by 1 s
        assert_eq!(predicted_windows(&[slot(1, 10_000)], 5_000, 1_000), 5);
        // adjacent slots share four of them
        assert_eq!(
            predicted_windows(&[slot(1, 10_000), slot(1, 11_000)], 5_000, 1_000),
            6
        );
        // other sensors do not
        assert_eq!(
            predicted_windows(&[slot(1, 10_000), slot(2, 10_000)], 5_000, 1_000),
            10
        );
        // near zero fewer windows exist
        assert_eq!(predicted_windows(&[slot(1, 1_000)], 5_000, 1_000), 2);
        assert_eq!(predicted_windows(&[slot(1, 0)], 5_000, 5_000), 1);
        assert_eq!(predicted_windows(&[], 5_000, 1_000), 0);
    }
}
