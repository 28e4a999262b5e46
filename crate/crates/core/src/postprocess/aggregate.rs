use std::collections::BTreeMap;

use serde::Serialize;

use super::{trim_warmup, PostprocessError, RunData};
use crate::metrics::{LatencyKind, TapName};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct TapStats {
    pub events_total: u64,
    pub mean_eps: f64,
    pub max_eps: f64,
    pub mean_mbps: f64,
    pub max_mbps: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LatencyStats {
    pub count: u64,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub max_us: u64,
}

/// Per-run figures, derived only from the run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub run_id: String,
    pub experiment_name: String,
    pub repetition: u32,
    pub parameters: BTreeMap<String, String>,
    pub pipeline_kind: String,
    pub parallelism: usize,
    pub offered_rate_eps: Option<u64>,
    pub status: String,
    /// Throughput samples per tap left after warmup trimming.
    pub samples: usize,
    pub taps: BTreeMap<TapName, TapStats>,
    pub latency: BTreeMap<LatencyKind, LatencyStats>,
    pub violations: usize,
}

fn mean(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count();
    if n == 0 {
        0.0
    } else {
        xs.sum::<f64>() / n as f64
    }
}

fn max(xs: impl Iterator<Item = f64>) -> f64 {
    xs.fold(0.0, f64::max)
}

pub fn report_run(
    run: &RunData,
    fraction: f64,
    violations: usize,
) -> Result<RunReport, PostprocessError> {
    let mut taps = BTreeMap::new();
    let mut samples = 0;
    for (tap, rows) in &run.throughput {
        let t = trim_warmup(rows, fraction)?;
        samples = samples.max(t.len());
        let eps = t.rows.iter().map(|(_, r)| r.events_per_s);
        let mbps = t.rows.iter().map(|(_, r)| r.mb_per_s);
        taps.insert(
            *tap,
            TapStats {
                events_total: rows.last().map_or(0, |r| r.events_total),
                mean_eps: mean(eps.clone()),
                max_eps: max(eps),
                mean_mbps: mean(mbps.clone()),
                max_mbps: max(mbps),
            },
        );
    }
    let latency = run
        .manifest
        .latency
        .iter()
        .map(|(k, l)| {
            (
                *k,
                LatencyStats {
                    count: l.count,
                    mean_us: l.mean_us,
                    p50_us: l.p50_us,
                    p95_us: l.p95_us,
                    p99_us: l.p99_us,
                    max_us: l.max_us,
                },
            )
        })
        .collect();
    let m = &run.manifest;
    Ok(RunReport {
        run_id: m.run_id.clone(),
        experiment_name: m.experiment_name.clone(),
        repetition: m.repetition,
        parameters: m.parameters.clone(),
        pipeline_kind: m.pipeline.kind.as_str().to_string(),
        parallelism: m.pipeline.parallelism,
        offered_rate_eps: m.parameters.get("rate").and_then(|r| r.parse().ok()),
        status: m.status.as_str().to_string(),
        samples,
        taps,
        latency,
        violations,
    })
}

/// Mean and sample standard deviation (n − 1); a single value has
/// deviation 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let m = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (m, var.sqrt())
}

/// Ordinary least-squares slope of `y` over `x`; `None` with fewer than two
/// distinct x values.
pub fn slope(points: &[(f64, f64)]) -> Option<f64> {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (points.len() >= 2 && sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    /// The remaining parameters, `key=value` joined by `;`.
    pub group: String,
    pub x: f64,
    pub n: usize,
    pub throughput_mean_eps: f64,
    pub throughput_std_eps: f64,
    pub p99_mean_us: f64,
    pub p99_std_us: f64,
    /// Only one repetition; the deviations are reported as 0.
    pub single_rep: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingTable {
    /// Name of the independent variable.
    pub variable: &'static str,
    pub rows: Vec<ScalingRow>,
}

impl ScalingTable {
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .map(|r| (r.x, r.throughput_mean_eps))
            .collect()
    }
}

/// Per (group, x): the x value, throughputs and p99s of every repetition.
type Cells = BTreeMap<(String, u64), (f64, Vec<f64>, Vec<f64>)>;

fn table(
    reports: &[RunReport],
    variable: &'static str,
    param: &str,
    x: impl Fn(&RunReport) -> Option<f64>,
    y: impl Fn(&RunReport) -> f64,
    p99: impl Fn(&RunReport) -> f64,
) -> ScalingTable {
    let mut cells = Cells::new();
    for r in reports {
        let Some(xv) = x(r) else { continue };
        let group = r
            .parameters
            .iter()
            .filter(|(k, _)| k.as_str() != param)
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        let cell = cells
            .entry((group, xv.to_bits()))
            .or_insert((xv, Vec::new(), Vec::new()));
        cell.1.push(y(r));
        cell.2.push(p99(r));
    }
    let mut rows: Vec<ScalingRow> = cells
        .into_iter()
        .map(|((group, _), (x, ys, ps))| {
            let (tm, ts) = mean_std(&ys);
            let (pm, ps_) = mean_std(&ps);
            ScalingRow {
                group,
                x,
                n: ys.len(),
                throughput_mean_eps: tm,
                throughput_std_eps: ts,
                p99_mean_us: pm,
                p99_std_us: ps_,
                single_rep: ys.len() == 1,
            }
        })
        .collect();
    rows.sort_by(|a, b| a.group.cmp(&b.group).then(a.x.total_cmp(&b.x)));
    ScalingTable { variable, rows }
}

/// Broker ingest throughput over offered rate, and processor throughput
/// and end-to-end p99 over parallelism, each across repetitions.
pub fn aggregate(reports: &[RunReport]) -> (ScalingTable, ScalingTable) {
    let tap = |r: &RunReport, t| r.taps.get(&t).map_or(0.0, |s| s.mean_eps);
    let p99 = |r: &RunReport, k| r.latency.get(&k).map_or(0.0, |l| l.p99_us);
    let rate = table(
        reports,
        "offered_rate_eps",
        "rate",
        |r| r.offered_rate_eps.map(|v| v as f64),
        |r| tap(r, TapName::BrokerIn),
        |r| p99(r, LatencyKind::Driver),
    );
    let par = table(
        reports,
        "parallelism",
        "par",
        |r| Some(r.parallelism as f64),
        |r| tap(r, TapName::Processor),
        |r| p99(r, LatencyKind::EndToEnd),
    );
    (rate, par)
}
