//! Keyed sliding-window averages.
//!
//! Windows are aligned: every start is a multiple of the slide, and the
//! slide divides the window length, so each timestamp belongs to exactly
//! `len / slide` windows (fewer near time zero, where starts are clamped).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::event::SensorEvent;

/// Ascending starts of every window containing `event_ts_ms`.
pub fn assign_windows(
    event_ts_ms: u64,
    window_len_ms: u64,
    slide_ms: u64,
) -> impl Iterator<Item = u64> {
    let last = event_ts_ms / slide_ms * slide_ms;
    // smallest aligned start s with s + len > ts, clamped at 0
    let first = match event_ts_ms.checked_sub(window_len_ms) {
        Some(d) => (d / slide_ms + 1) * slide_ms,
        None => 0,
    };
    (first..=last).step_by(slide_ms as usize)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window_start_ms: u64,
    pub window_end_ms: u64,
    pub sensor_id: u64,
    pub avg_temperature_c: f64,
    pub event_count: u64,
}

impl WindowResult {
    /// `[start,end,sensor_id,avg,count]`
    pub fn encode(&self) -> Vec<u8> {
        format!(
            "[{},{},{},{:?},{}]",
            self.window_start_ms,
            self.window_end_ms,
            self.sensor_id,
            self.avg_temperature_c,
            self.event_count
        )
        .into_bytes()
    }

    pub fn decode(bytes: &[u8]) -> Option<Self> {
        let (window_start_ms, window_end_ms, sensor_id, avg_temperature_c, event_count) =
            serde_json::from_slice(bytes).ok()?;
        Some(Self {
            window_start_ms,
            window_end_ms,
            sensor_id,
            avg_temperature_c,
            event_count,
        })
    }
}

/// Bookkeeping carried alongside a closed window for latency measurement.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WindowMeta {
    /// Newest creation timestamp among the window's events.
    pub newest_created_ms: u64,
    /// Newest arrival at the worker among the window's events.
    pub newest_ingest_us: u64,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    sum: CompensatedSum,
    count: u64,
    meta: WindowMeta,
}

/// Open windows of one worker, keyed by `(window_start, sensor_id)`.
#[derive(Debug, Clone)]
pub struct WindowState {
    window_len_ms: u64,
    slide_ms: u64,
    cells: BTreeMap<(u64, u64), Cell>,
    /// Windows ending at or before this have been emitted.
    closed_through_ms: u64,
    late_events: u64,
}

impl WindowState {
    /// # Panics
    /// If `slide_ms` is zero or does not divide `window_len_ms`.
    pub fn new(window_len_ms: u64, slide_ms: u64) -> Self {
        assert!(
            slide_ms > 0 && window_len_ms.is_multiple_of(slide_ms),
            "slide must divide window length"
        );
        Self {
            window_len_ms,
            slide_ms,
            cells: BTreeMap::new(),
            closed_through_ms: 0,
            late_events: 0,
        }
    }

    pub fn window_len_ms(&self) -> u64 {
        self.window_len_ms
    }

    pub fn slide_ms(&self) -> u64 {
        self.slide_ms
    }

    /// Open `(sensor, window)` cells.
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Events that arrived only for windows already emitted.
    pub fn late_events(&self) -> u64 {
        self.late_events
    }

    /// Adds `e` to its windows by creation time.
    pub fn update(&mut self, e: &SensorEvent) {
        self.update_at(
            e,
            e.created_at,
            WindowMeta {
                newest_created_ms: e.created_at,
                newest_ingest_us: 0,
            },
        );
    }

    /// Adds `e` to the windows containing `ts_ms`. Windows that already
    /// closed are skipped; returns false when every window had closed.
    pub fn update_at(&mut self, e: &SensorEvent, ts_ms: u64, meta: WindowMeta) -> bool {
        let mut absorbed = false;
        for start in assign_windows(ts_ms, self.window_len_ms, self.slide_ms) {
            if start + self.window_len_ms <= self.closed_through_ms {
                continue;
            }
            let cell = self.cells.entry((start, e.sensor_id)).or_default();
            cell.sum.add(e.temperature_c);
            cell.count += 1;
            cell.meta.newest_created_ms = cell.meta.newest_created_ms.max(meta.newest_created_ms);
            cell.meta.newest_ingest_us = cell.meta.newest_ingest_us.max(meta.newest_ingest_us);
            absorbed = true;
        }
        if !absorbed {
            self.late_events += 1;
        }
        absorbed
    }

    /// Emits and evicts every window with `end <= watermark_ms`, ordered by
    /// `(window_start, sensor_id)`.
    pub fn flush_with_meta(&mut self, watermark_ms: u64) -> Vec<(WindowResult, WindowMeta)> {
        let Some(last_start) = watermark_ms.checked_sub(self.window_len_ms) else {
            return Vec::new();
        };
        let open = self.cells.split_off(&(last_start + 1, 0));
        let closed = std::mem::replace(&mut self.cells, open);
        self.closed_through_ms = self.closed_through_ms.max(watermark_ms);
        closed
            .into_iter()
            .map(|((start, sensor_id), cell)| {
                (
                    WindowResult {
                        window_start_ms: start,
                        window_end_ms: start + self.window_len_ms,
                        sensor_id,
                        avg_temperature_c: cell.sum.value() / cell.count as f64,
                        event_count: cell.count,
                    },
                    cell.meta,
                )
            })
            .collect()
    }

    pub fn flush(&mut self, watermark_ms: u64) -> Vec<WindowResult> {
        self.flush_with_meta(watermark_ms)
            .into_iter()
            .map(|(r, _)| r)
            .collect()
    }

    /// Emits every open window regardless of time.
    pub fn flush_all(&mut self) -> Vec<(WindowResult, WindowMeta)> {
        self.flush_with_meta(u64::MAX)
    }
}
