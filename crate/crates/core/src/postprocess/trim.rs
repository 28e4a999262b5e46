use super::PostprocessError;
use crate::metrics::Sample;

pub const DEFAULT_WARMUP_FRACTION: f64 = 0.1;

/// Rows left after trimming, each with its runtime position in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trimmed<R> {
    pub rows: Vec<(f64, R)>,
}

impl<R> Trimmed<R> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Drops `ceil(fraction * n)` samples from each end and maps the remaining
/// timestamps linearly onto `[0, 1]`. A single remaining sample sits at 0.
pub fn trim_warmup<R: Sample + Clone>(
    rows: &[R],
    fraction: f64,
) -> Result<Trimmed<R>, PostprocessError> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(PostprocessError::InvalidFraction(fraction));
    }
    let n = rows.len();
    let cut = (fraction * n as f64).ceil() as usize;
    let kept = if 2 * cut >= n {
        &[][..]
    } else {
        &rows[cut..n - cut]
    };
    let (first, last) = match (kept.first(), kept.last()) {
        (Some(a), Some(b)) => (a.ts_ms(), b.ts_ms()),
        _ => return Ok(Trimmed { rows: Vec::new() }),
    };
    let span = last.saturating_sub(first);
    let rows = kept
        .iter()
        .map(|r| {
            let t = if span == 0 {
                0.0
            } else {
                (r.ts_ms().saturating_sub(first)) as f64 / span as f64
            };
            (t.clamp(0.0, 1.0), r.clone())
        })
        .collect();
    Ok(Trimmed { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ThroughputRow;

    fn rows(n: u64) -> Vec<ThroughputRow> {
        (0..n)
            .map(|i| ThroughputRow {
                ts_ms: 1000 + i * 1000,
                events_total: i,
                bytes_total: 0,
                events_per_s: i as f64,
                mb_per_s: 0.0,
            })
            .collect()
    }

    #[test]
    fn hundred_samples_keep_eighty() {
        let t = trim_warmup(&rows(100), 0.1).unwrap();
        assert_eq!(t.len(), 80);
        assert_eq!(t.rows[0].1.events_total, 10);
        assert_eq!(t.rows[79].1.events_total, 89);
        assert_eq!(t.rows[0].0, 0.0);
        assert_eq!(t.rows[79].0, 1.0);
    }

    #[test]
    fn zero_fraction_only_normalizes() {
        let t = trim_warmup(&rows(5), 0.0).unwrap();
        let times: Vec<f64> = t.rows.iter().map(|r| r.0).collect();
        assert_eq!(times, [0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn three_samples_keep_middle() {
        let t = trim_warmup(&rows(3), 0.1).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.rows[0], (0.0, rows(3)[1].clone()));
    }

    #[test]
    fn empty_and_invalid() {
        assert!(trim_warmup(&rows(2), 0.1).unwrap().is_empty());
        assert!(trim_warmup(&rows(0), 0.0).unwrap().is_empty());
        assert!(matches!(
            trim_warmup(&rows(4), 0.5),
            Err(PostprocessError::InvalidFraction(_))
        ));
        assert!(trim_warmup(&rows(4), -0.1).is_err());
    }
}
