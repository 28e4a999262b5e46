//! Fixed-boundary logarithmic latency histogram.
//!
//! Bucket 0 holds values below 1 µs. Buckets 1..=54 cover
//! `[sqrt(2)^(k-1), sqrt(2)^k)` µs, reaching 2^27 µs (about 134 s). The last
//! bucket catches everything beyond.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

const LOG_BUCKETS: usize = 54;
pub const BUCKET_COUNT: usize = LOG_BUCKETS + 2;
const OVERFLOW: usize = BUCKET_COUNT - 1;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum HistogramError {
    #[error("histogram is empty")]
    EmptyHistogram,
}

/// `sqrt(2)^j`
fn boundary(j: usize) -> f64 {
    let base = (1u64 << (j / 2)) as f64;
    if j.is_multiple_of(2) {
        base
    } else {
        base * std::f64::consts::SQRT_2
    }
}

/// Index of the bucket holding `value_us`.
pub fn bucket_index(value_us: u64) -> usize {
    if value_us == 0 {
        return 0;
    }
    let v = value_us as f64;
    let mut j = ((2.0 * v.log2()).floor() as usize).min(LOG_BUCKETS);
    while j > 0 && boundary(j) > v {
        j -= 1;
    }
    while j < LOG_BUCKETS && boundary(j + 1) <= v {
        j += 1;
    }
    if j >= LOG_BUCKETS {
        OVERFLOW
    } else {
        j + 1
    }
}

/// `[lo, hi)` in µs; the overflow bucket is unbounded above.
pub fn bucket_range(index: usize) -> (f64, f64) {
    match index {
        0 => (0.0, 1.0),
        OVERFLOW => (boundary(LOG_BUCKETS), f64::INFINITY),
        k => (boundary(k - 1), boundary(k)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatencyHistogram {
    counts: Vec<u64>,
    total: u64,
    max: u64,
    sum: u64,
}

impl Default for LatencyHistogram {
    fn default() -> Self {
        Self {
            counts: vec![0; BUCKET_COUNT],
            total: 0,
            max: 0,
            sum: 0,
        }
    }
}

impl LatencyHistogram {
    pub fn record(&mut self, value_us: u64) {
        self.counts[bucket_index(value_us)] += 1;
        self.total += 1;
        self.max = self.max.max(value_us);
        self.sum = self.sum.saturating_add(value_us);
    }

    pub fn merge(&mut self, other: &LatencyHistogram) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        self.max = self.max.max(other.max);
        self.sum = self.sum.saturating_add(other.sum);
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn max(&self) -> u64 {
        self.max
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn mean(&self) -> Option<f64> {
        (self.total > 0).then(|| self.sum as f64 / self.total as f64)
    }

    /// Midpoint of the first bucket where the cumulative count reaches
    /// `q * total`. Values in the overflow bucket report the observed max.
    pub fn percentile(&self, q: f64) -> Result<f64, HistogramError> {
        if self.total == 0 {
            return Err(HistogramError::EmptyHistogram);
        }
        let q = q.clamp(f64::MIN_POSITIVE, 1.0);
        let target = q * self.total as f64;
        let mut cumulative = 0u64;
        for (i, &c) in self.counts.iter().enumerate() {
            cumulative += c;
            if c > 0 && cumulative as f64 >= target {
                return Ok(midpoint(i, self.max));
            }
        }
        Ok(midpoint(bucket_index(self.max), self.max))
    }
}

fn midpoint(index: usize, max: u64) -> f64 {
    if index == OVERFLOW {
        return max as f64;
    }
    let (lo, hi) = bucket_range(index);
    (lo + hi) / 2.0
}

/// Lock-free counterpart used on recording hot paths.
#[derive(Debug)]
pub(crate) struct AtomicHistogram {
    counts: Box<[AtomicU64]>,
    max: AtomicU64,
    sum: AtomicU64,
}

impl Default for AtomicHistogram {
    fn default() -> Self {
        Self {
            counts: (0..BUCKET_COUNT).map(|_| AtomicU64::new(0)).collect(),
            max: AtomicU64::new(0),
            sum: AtomicU64::new(0),
        }
    }
}

impl AtomicHistogram {
    pub(crate) fn record(&self, value_us: u64) {
        self.counts[bucket_index(value_us)].fetch_add(1, Ordering::Relaxed);
        self.max.fetch_max(value_us, Ordering::Relaxed);
        self.sum.fetch_add(value_us, Ordering::Relaxed);
    }

    pub(crate) fn load_into(&self, out: &mut LatencyHistogram) {
        let mut total = 0;
        for (dst, src) in out.counts.iter_mut().zip(self.counts.iter()) {
            let c = src.load(Ordering::Relaxed);
            *dst += c;
            total += c;
        }
        out.total += total;
        out.max = out.max.max(self.max.load(Ordering::Relaxed));
        out.sum = out.sum.saturating_add(self.sum.load(Ordering::Relaxed));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn covers_one_us_to_hundred_s() {
        assert_eq!(bucket_index(0), 0);
        assert_eq!(bucket_index(1), 1);
        assert_eq!(bucket_index(100_000_000), bucket_index(100_000_000));
        assert!(bucket_index(100_000_000) < OVERFLOW);
        assert_eq!(bucket_index(u64::MAX), OVERFLOW);
        let (lo, hi) = bucket_range(bucket_index(100_000_000));
        assert!(lo <= 1e8 && 1e8 < hi);
        assert!((hi / lo - std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn membership() {
        let (lo, hi) = bucket_range(bucket_index(5000));
        assert!(lo <= 5000.0 && 5000.0 < hi);
        for v in [1u64, 2, 3, 4, 5, 7, 8, 11, 181, 1 << 20, 123_456_789] {
            let (lo, hi) = bucket_range(bucket_index(v));
            assert!(lo <= v as f64 && (v as f64) < hi, "{v}");
        }
    }

    #[test]
    fn singleton_percentiles() {
        let mut h = LatencyHistogram::default();
        h.record(5000);
        let (lo, hi) = bucket_range(bucket_index(5000));
        for q in [0.5, 0.95, 0.99, 1.0] {
            assert_eq!(h.percentile(q).unwrap(), (lo + hi) / 2.0);
        }
    }

    #[test]
    fn empty() {
        assert_eq!(
            LatencyHistogram::default().percentile(0.5),
            Err(HistogramError::EmptyHistogram)
        );
    }

    #[test]
    fn p99_of_uniform_ms_values() {
        let values: Vec<u64> = (1..=100).map(|ms| ms * 1000).collect();
        let mut h = LatencyHistogram::default();
        values.iter().for_each(|&v| h.record(v));
        // exact oracle: nearest-rank on the sorted values
        let mut sorted = values.clone();
        sorted.sort_unstable();
        let rank = (0.99 * sorted.len() as f64).ceil() as usize;
        let exact = sorted[rank - 1] as f64;
        assert_eq!(exact, 99_000.0);
        let got = h.percentile(0.99).unwrap();
        let (lo, hi) = bucket_range(bucket_index(99_000));
        assert!((got - exact).abs() <= hi - lo, "{got} vs {exact}");
        // q = 1 lands in the bucket of the maximum
        let (lo, hi) = bucket_range(bucket_index(100_000));
        assert_eq!(h.percentile(1.0).unwrap(), (lo + hi) / 2.0);
    }

    proptest! {
        #[test]
        fn sum_and_monotone(values in prop::collection::vec(0u64..200_000_000, 1..300)) {
            let mut h = LatencyHistogram::default();
            values.iter().for_each(|&v| h.record(v));
            prop_assert_eq!(h.counts().iter().sum::<u64>(), h.total());
            prop_assert_eq!(h.max(), *values.iter().max().unwrap());
            let qs = [0.01, 0.1, 0.5, 0.9, 0.95, 0.99, 1.0];
            let ps: Vec<f64> = qs.iter().map(|&q| h.percentile(q).unwrap()).collect();
            prop_assert!(ps.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn bucket_contains_value(v in 1u64..(1 << 27)) {
            let (lo, hi) = bucket_range(bucket_index(v));
            prop_assert!(lo <= v as f64 && (v as f64) < hi);
        }
    }
}
