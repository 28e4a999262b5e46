//! Process-wide clock.
//!
//! All timestamps in a run (event creation, broker ingest, processing, egress)
//! come from one clock: a wall-clock anchor captured once at startup plus a
//! monotonic offset. Readings are therefore comparable across threads and never
//! go backwards, while still being expressed as time since the Unix epoch.

use std::sync::OnceLock;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

struct Anchor {
    wall_us: u64,
    mono: Instant,
}

fn anchor() -> &'static Anchor {
    static ANCHOR: OnceLock<Anchor> = OnceLock::new();
    ANCHOR.get_or_init(|| Anchor {
        wall_us: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_micros() as u64)
            .unwrap_or(1),
        mono: Instant::now(),
    })
}

/// Microseconds since the Unix epoch, monotone within the process.
pub fn now_us() -> u64 {
    let a = anchor();
    a.wall_us + a.mono.elapsed().as_micros() as u64
}

/// Milliseconds since the Unix epoch, monotone within the process.
pub fn now_ms() -> u64 {
    now_us() / 1000
}

/// Source of "now" for event creation. Tests substitute fixed clocks.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

/// The process clock.
#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        now_ms()
    }
}

/// A clock frozen at one instant.
#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub u64);

impl Clock for FixedClock {
    fn now_ms(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_and_epoch_based() {
        let a = now_us();
        let b = now_us();
        assert!(b >= a);
        // after 2020-01-01
        assert!(now_ms() > 1_577_836_800_000);
    }
}
