use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::{trim_warmup, ExternalSample, PostprocessError, RunData, RunReport, ScalingTable};
use crate::metrics::{latency_file, throughput_file, LatencyKind, TapName, PROCESS_FILE};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const SCALING_RATE_FILE: &str = "scaling_rate.csv";
pub const SCALING_PARALLELISM_FILE: &str = "scaling_parallelism.csv";
pub const TIMESERIES_DIR: &str = "timeseries";
/// Largest gap at which an external sample is matched to a process sample.
pub const EXTERNAL_MATCH_MS: u64 = 500;

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), PostprocessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let to_io = |e: csv::Error| PostprocessError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(header).map_err(to_io)?;
    for r in rows {
        w.write_record(r).map_err(to_io)?;
    }
    let bytes = w.into_inner().map_err(|e| PostprocessError::Io {
        path: path.to_path_buf(),
        source: e.into_error(),
    })?;
    fs::write(path, bytes).map_err(PostprocessError::io(path))
}

fn strings<const N: usize>(xs: [&str; N]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

fn summary(reports: &[RunReport]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = strings([
        "run_id",
        "experiment",
        "repetition",
        "pipeline",
        "parallelism",
        "offered_rate_eps",
        "status",
        "samples",
        "violations",
    ]);
    for tap in TapName::ALL {
        for col in [
            "events_total",
            "mean_eps",
            "max_eps",
            "mean_mbps",
            "max_mbps",
        ] {
            header.push(format!("{}_{col}", tap.as_str()));
        }
    }
    for kind in LatencyKind::ALL {
        for col in ["count", "mean_us", "p50_us", "p95_us", "p99_us", "max_us"] {
            header.push(format!("{}_{col}", kind.as_str()));
        }
    }
    let rows = reports
        .iter()
        .map(|r| {
            let mut row = vec![
                r.run_id.clone(),
                r.experiment_name.clone(),
                r.repetition.to_string(),
                r.pipeline_kind.clone(),
                r.parallelism.to_string(),
                r.offered_rate_eps
                    .map(|v| v.to_string())
                    .unwrap_or_default(),
                r.status.clone(),
                r.samples.to_string(),
                r.violations.to_string(),
            ];
            for tap in TapName::ALL {
                let t = r.taps.get(&tap).copied().unwrap_or_default();
                row.extend([
                    t.events_total.to_string(),
                    t.mean_eps.to_string(),
                    t.max_eps.to_string(),
                    t.mean_mbps.to_string(),
                    t.max_mbps.to_string(),
                ]);
            }
            for kind in LatencyKind::ALL {
                let l = r.latency.get(&kind).copied().unwrap_or_default();
                row.extend([
                    l.count.to_string(),
                    l.mean_us.to_string(),
                    l.p50_us.to_string(),
                    l.p95_us.to_string(),
                    l.p99_us.to_string(),
                    l.max_us.to_string(),
                ]);
            }
            row
        })
        .collect();
    (header, rows)
}

fn scaling(t: &ScalingTable) -> (Vec<String>, Vec<Vec<String>>) {
    let header = vec![
        "group".to_string(),
        t.variable.to_string(),
        "n".into(),
        "throughput_mean_eps".into(),
        "throughput_std_eps".into(),
        "p99_mean_us".into(),
        "p99_std_us".into(),
        "single_rep".into(),
    ];
    let rows = t
        .rows
        .iter()
        .map(|r| {
            vec![
                r.group.clone(),
                r.x.to_string(),
                r.n.to_string(),
                r.throughput_mean_eps.to_string(),
                r.throughput_std_eps.to_string(),
                r.p99_mean_us.to_string(),
                r.p99_std_us.to_string(),
                r.single_rep.to_string(),
            ]
        })
        .collect();
    (header, rows)
}

/// Value of the sample nearest to `ts` within the match tolerance; ties go
/// to the earlier sample. `samples` is sorted by timestamp.
fn nearest(samples: &[(u64, f64)], ts: u64) -> Option<f64> {
    let i = samples.partition_point(|s| s.0 < ts);
    let before = i.checked_sub(1).map(|j| samples[j]);
    let after = samples.get(i).copied();
    let best = match (before, after) {
        (Some(b), Some(a)) => {
            if a.0 - ts < ts - b.0 {
                a
            } else {
                b
            }
        }
        (Some(b), None) => b,
        (None, Some(a)) => a,
        (None, None) => return None,
    };
    (best.0.abs_diff(ts) <= EXTERNAL_MATCH_MS).then_some(best.1)
}

fn external_columns(external: &[ExternalSample]) -> BTreeMap<&str, Vec<(u64, f64)>> {
    let mut by_metric: BTreeMap<&str, Vec<(u64, f64)>> = BTreeMap::new();
    for s in external {
        by_metric
            .entry(&s.metric)
            .or_default()
            .push((s.ts_ms, s.value));
    }
    for v in by_metric.values_mut() {
        // stable: equal timestamps keep file order
        v.sort_by_key(|s| s.0);
    }
    by_metric
}

fn timeseries(run: &RunData, dir: &Path, fraction: f64) -> Result<(), PostprocessError> {
    fs::create_dir_all(dir).map_err(PostprocessError::io(dir))?;
    for (tap, rows) in &run.throughput {
        let t = trim_warmup(rows, fraction)?;
        let out: Vec<Vec<String>> = t
            .rows
            .iter()
            .map(|(n, r)| {
                vec![
                    n.to_string(),
                    r.ts_ms.to_string(),
                    r.events_per_s.to_string(),
                    r.mb_per_s.to_string(),
                ]
            })
            .collect();
        write_csv(
            &dir.join(throughput_file(*tap)),
            &strings(["t_norm", "ts_ms", "events_per_s", "mb_per_s"]),
            &out,
        )?;
    }
    for (kind, rows) in &run.latency {
        let t = trim_warmup(rows, fraction)?;
        let out: Vec<Vec<String>> = t
            .rows
            .iter()
            .map(|(n, r)| {
                vec![
                    n.to_string(),
                    r.ts_ms.to_string(),
                    r.count.to_string(),
                    r.p50_us.to_string(),
                    r.p95_us.to_string(),
                    r.p99_us.to_string(),
                    r.max_us.to_string(),
                ]
            })
            .collect();
        write_csv(
            &dir.join(latency_file(*kind)),
            &strings([
                "t_norm", "ts_ms", "count", "p50_us", "p95_us", "p99_us", "max_us",
            ]),
            &out,
        )?;
    }

    let ext = external_columns(&run.external);
    let mut header = strings([
        "t_norm",
        "ts_ms",
        "cpu_percent",
        "rss_bytes",
        "reclaim_count",
        "reclaim_time_ms",
    ]);
    header.extend(ext.keys().map(|m| format!("ext_{m}")));
    let t = trim_warmup(&run.process, fraction)?;
    let out: Vec<Vec<String>> = t
        .rows
        .iter()
        .map(|(n, r)| {
            let mut row = vec![
                n.to_string(),
                r.ts_ms.to_string(),
                r.cpu_percent.to_string(),
                r.rss_bytes.to_string(),
                r.reclaim_count.to_string(),
                r.reclaim_time_ms.to_string(),
            ];
            row.extend(ext.values().map(|s| {
                nearest(s, r.ts_ms)
                    .map(|v| v.to_string())
                    .unwrap_or_default()
            }));
            row
        })
        .collect();
    write_csv(&dir.join(PROCESS_FILE), &header, &out)
}

/// Writes the summary, both scaling tables and the trimmed, runtime
/// normalized series of every run. Output depends only on the inputs.
pub fn emit_outputs(
    reports: &[RunReport],
    rate: &ScalingTable,
    parallelism: &ScalingTable,
    runs: &[RunData],
    out: &Path,
    fraction: f64,
) -> Result<(), PostprocessError> {
    fs::create_dir_all(out).map_err(PostprocessError::io(out))?;
    let mut sorted: Vec<&RunReport> = reports.iter().collect();
    sorted.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    let sorted: Vec<RunReport> = sorted.into_iter().cloned().collect();
    let (h, r) = summary(&sorted);
    write_csv(&out.join(SUMMARY_FILE), &h, &r)?;
    let (h, r) = scaling(rate);
    write_csv(&out.join(SCALING_RATE_FILE), &h, &r)?;
    let (h, r) = scaling(parallelism);
    write_csv(&out.join(SCALING_PARALLELISM_FILE), &h, &r)?;
    for run in runs {
        timeseries(
            run,
            &out.join(TIMESERIES_DIR).join(&run.manifest.run_id),
            fraction,
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_within_tolerance() {
        let s = [(1_000, 1.0), (2_000, 2.0), (3_000, 3.0)];
        assert_eq!(nearest(&s, 1_400), Some(1.0));
        assert_eq!(nearest(&s, 1_500), Some(1.0));
        assert_eq!(nearest(&s, 1_501), Some(2.0));
        assert_eq!(nearest(&s, 3_500), Some(3.0));
        assert_eq!(nearest(&s, 3_501), None);
        assert_eq!(nearest(&s, 499), None);
        assert_eq!(nearest(&s, 500), Some(1.0));
        assert_eq!(nearest(&[], 500), None);
    }
}
