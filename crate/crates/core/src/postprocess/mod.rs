//! Offline analysis of run directories: loading, validation, warmup
//! trimming, aggregation over repetitions and plot-ready CSV output.

mod aggregate;
mod emit;
mod load;
mod trim;
mod validate;

pub use aggregate::{
    aggregate, mean_std, report_run, slope, LatencyStats, RunReport, ScalingRow, ScalingTable,
    TapStats,
};
pub use emit::{
    emit_outputs, SCALING_PARALLELISM_FILE, SCALING_RATE_FILE, SUMMARY_FILE, TIMESERIES_DIR,
};
pub use load::{discover_runs, load_run, ExternalSample, RunData, EXTERNAL_DIR};
pub use trim::{trim_warmup, Trimmed, DEFAULT_WARMUP_FRACTION};
pub use validate::{predicted_windows, validate_run, RunViolation};

use std::path::{Path, PathBuf};

use crate::metrics::SeriesError;

#[derive(Debug, thiserror::Error)]
pub enum PostprocessError {
    #[error("{0}: no manifest.json")]
    MissingManifest(PathBuf),
    #[error("{path}: invalid manifest: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("warmup fraction {0} outside [0, 0.5)")]
    InvalidFraction(f64),
    #[error("no run directories under {0}")]
    NoRuns(PathBuf),
}

impl PostprocessError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| PostprocessError::Io { path, source }
    }
}

/// Result of a full postprocessing pass.
#[derive(Debug, Clone)]
pub struct PostprocessSummary {
    pub reports: Vec<RunReport>,
    pub violations: Vec<(String, RunViolation)>,
}

/// Loads every run under `results`, validates and aggregates them, and
/// writes the output tables into `out`.
pub fn postprocess(
    results: &Path,
    out: &Path,
    fraction: f64,
) -> Result<PostprocessSummary, PostprocessError> {
    let dirs = discover_runs(results)?;
    if dirs.is_empty() {
        return Err(PostprocessError::NoRuns(results.to_path_buf()));
    }
    // loading is independent per run; everything after is single-threaded
    let loaded: Vec<Result<RunData, PostprocessError>> = std::thread::scope(|s| {
        let handles: Vec<_> = dirs.iter().map(|d| s.spawn(move || load_run(d))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("loader panicked"))
            .collect()
    });
    let runs = loaded.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut reports = Vec::with_capacity(runs.len());
    let mut violations = Vec::new();
    for run in &runs {
        let v = validate_run(run);
        violations.extend(v.iter().cloned().map(|x| (run.manifest.run_id.clone(), x)));
        reports.push(report_run(run, fraction, v.len())?);
    }
    let (rate, parallelism) = aggregate(&reports);
    emit_outputs(&reports, &rate, &parallelism, &runs, out, fraction)?;
    Ok(PostprocessSummary {
        reports,
        violations,
    })
}
