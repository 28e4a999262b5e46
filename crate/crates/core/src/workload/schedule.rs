//! Emission schedules.
//!
//! Time advances in 1 ms ticks. Each tick adds the current rate to a deficit
//! accumulator and releases as many whole events as it holds, so fractional
//! events carry over into later ticks and the long-run count is exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Pattern, RandomSpec, WorkloadSpec};

/// Length of one active phase of the random pattern, and of each burst.
pub const ACTIVE_PHASE_MS: u64 = 100;

/// `count` events are due at `offset_ms` after the schedule starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tick {
    pub offset_ms: u64,
    pub count: u64,
}

#[derive(Debug, Clone)]
enum Shape {
    Constant(u64),
    Random(RandomSpec),
}

/// Infinite, deterministic stream of non-empty ticks.
#[derive(Debug, Clone)]
pub struct Schedule {
    rng: ChaCha8Rng,
    shape: Shape,
    share_num: u128,
    share_den: u128,
    next_ms: u64,
    phase_end_ms: u64,
    pause_after_ms: u64,
    rate_eps: u64,
    acc: u128,
}

/// The schedule for the whole workload, as if one instance produced it.
pub fn emission_schedule(spec: &WorkloadSpec, rng_seed: u64) -> Schedule {
    Schedule::new(spec, rng_seed, 1, 1)
}

impl Schedule {
    /// A schedule emitting `share_num / share_den` of the workload's rates.
    pub fn new(spec: &WorkloadSpec, rng_seed: u64, share_num: u64, share_den: u64) -> Self {
        let shape = match spec.pattern {
            Pattern::Constant => Shape::Constant(spec.total_rate_eps),
            Pattern::Random => Shape::Random(spec.random.expect("random pattern requires bounds")),
            Pattern::Burst => Shape::Random(
                spec.burst
                    .expect("burst pattern requires bounds")
                    .as_random(),
            ),
        };
        Self {
            rng: ChaCha8Rng::seed_from_u64(rng_seed),
            shape,
            share_num: u128::from(share_num),
            share_den: u128::from(share_den.max(1)),
            next_ms: 0,
            phase_end_ms: 0,
            pause_after_ms: 0,
            rate_eps: 0,
            acc: 0,
        }
    }

    fn start_phase(&mut self) {
        match self.shape {
            Shape::Constant(rate) => {
                self.rate_eps = rate;
                self.phase_end_ms = u64::MAX;
                self.pause_after_ms = 0;
            }
            Shape::Random(r) => {
                self.rate_eps = self.rng.gen_range(r.min_freq_eps..=r.max_freq_eps);
                self.pause_after_ms = self.rng.gen_range(r.min_pause_ms..=r.max_pause_ms);
                self.phase_end_ms = self.next_ms.saturating_add(ACTIVE_PHASE_MS);
            }
        }
    }

    fn peak(&self) -> u64 {
        match self.shape {
            Shape::Constant(r) => r,
            Shape::Random(r) => r.max_freq_eps,
        }
    }

    /// Per-event instants in ms; a tick of `count` events repeats its offset.
    pub fn instants(self) -> impl Iterator<Item = u64> {
        self.flat_map(|t| std::iter::repeat_n(t.offset_ms, t.count as usize))
    }

    /// Ticks strictly before `duration_ms`.
    pub fn until(self, duration_ms: u64) -> impl Iterator<Item = Tick> {
        self.take_while(move |t| t.offset_ms < duration_ms)
    }
}

impl Iterator for Schedule {
    type Item = Tick;

    fn next(&mut self) -> Option<Tick> {
        if u128::from(self.peak()) * self.share_num == 0 {
            return None;
        }
        let unit = self.share_den * 1000;
        loop {
            if self.next_ms >= self.phase_end_ms {
                self.start_phase();
            }
            let tick = self.next_ms;
            self.next_ms += 1;
            if self.next_ms == self.phase_end_ms {
                self.next_ms = self.next_ms.saturating_add(self.pause_after_ms);
            }
            self.acc += u128::from(self.rate_eps) * self.share_num;
            let count = self.acc / unit;
            self.acc %= unit;
            if count > 0 {
                return Some(Tick {
                    offset_ms: tick,
                    count: count as u64,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::BurstSpec;

    fn burst(interval_ms: u64, freq: u64) -> WorkloadSpec {
        WorkloadSpec {
            pattern: Pattern::Burst,
            burst: Some(BurstSpec {
                interval_ms,
                burst_freq_eps: freq,
            }),
            ..WorkloadSpec::constant(freq)
        }
    }

    fn random(r: RandomSpec) -> WorkloadSpec {
        WorkloadSpec {
            pattern: Pattern::Random,
            random: Some(r),
            ..WorkloadSpec::constant(r.max_freq_eps)
        }
    }

    #[test]
    fn constant_one_per_ms() {
        let got: Vec<u64> = emission_schedule(&WorkloadSpec::constant(1000), 0)
            .until(1000)
            .flat_map(|t| std::iter::repeat_n(t.offset_ms, t.count as usize))
            .collect();
        assert_eq!(got.len(), 1000);
        assert!(got.windows(2).all(|w| w[1] - w[0] == 1));
    }

    #[test]
    fn constant_batches_and_carries() {
        let total: u64 = emission_schedule(&WorkloadSpec::constant(100_000), 0)
            .until(10_000)
            .map(|t| t.count)
            .sum();
        assert_eq!(total, 1_000_000);
        // 333 eps does not divide into whole events per tick
        let total: u64 = emission_schedule(&WorkloadSpec::constant(333), 0)
            .until(3000)
            .map(|t| t.count)
            .sum();
        assert_eq!(total, 999);
    }

    #[test]
    fn burst_boundaries() {
        let ticks: Vec<Tick> = emission_schedule(&burst(500, 10_000), 1)
            .until(2000)
            .collect();
        // each burst: 100 ms at 10 eps/ms
        let starts: Vec<u64> = ticks
            .windows(2)
            .filter(|w| w[1].offset_ms - w[0].offset_ms > 1)
            .map(|w| w[1].offset_ms)
            .collect();
        assert_eq!(ticks[0].offset_ms, 0);
        assert_eq!(starts, vec![500, 1000, 1500]);
        assert_eq!(ticks.iter().map(|t| t.count).sum::<u64>(), 4 * 1000);
        assert!(ticks.iter().all(|t| t.offset_ms % 500 < 100));
    }

    #[test]
    fn burst_is_collapsed_random() {
        let b = burst(500, 20_000);
        let r = random(RandomSpec {
            min_pause_ms: 400,
            max_pause_ms: 400,
            min_freq_eps: 20_000,
            max_freq_eps: 20_000,
        });
        for seed in [0, 7, 99] {
            let a: Vec<Tick> = emission_schedule(&b, seed).until(10_000).collect();
            let c: Vec<Tick> = emission_schedule(&r, seed).until(10_000).collect();
            assert_eq!(a, c);
        }
    }

    #[test]
    fn random_is_deterministic_and_bounded() {
        let spec = random(RandomSpec {
            min_pause_ms: 10,
            max_pause_ms: 200,
            min_freq_eps: 1_000,
            max_freq_eps: 50_000,
        });
        let a: Vec<Tick> = emission_schedule(&spec, 42).until(20_000).collect();
        let b: Vec<Tick> = emission_schedule(&spec, 42).until(20_000).collect();
        let c: Vec<Tick> = emission_schedule(&spec, 43).until(20_000).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        // per-tick release never exceeds the max frequency
        assert!(a.iter().all(|t| t.count <= 50));
    }

    #[test]
    fn shares_sum_to_whole() {
        let spec = WorkloadSpec::constant(1_000_001);
        let whole: u64 = emission_schedule(&spec, 0)
            .until(1000)
            .map(|t| t.count)
            .sum();
        let parts: u64 = [333_334u64, 333_334, 333_333]
            .iter()
            .map(|&r| {
                Schedule::new(&spec, 0, r, 1_000_001)
                    .until(1000)
                    .map(|t| t.count)
                    .sum::<u64>()
            })
            .sum();
        assert_eq!(whole, 1_000_001);
        assert!(whole - parts <= 3);
    }

    #[test]
    fn zero_rate_is_empty() {
        let spec = WorkloadSpec {
            total_rate_eps: 0,
            ..WorkloadSpec::constant(1)
        };
        assert_eq!(emission_schedule(&spec, 0).next(), None);
    }
}
