use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::PostprocessError;
use crate::engine::WindowSlot;
use crate::metrics::{
    latency_file, read_rows, throughput_file, LatencyKind, LatencyRow, ProcessRow, TapName,
    ThroughputRow, PROCESS_FILE,
};
use crate::orchestrator::{RunManifest, MANIFEST_FILE, WINDOW_SLOTS_FILE};

/// Directory inside a run directory holding externally collected series.
pub const EXTERNAL_DIR: &str = "external";

/// One row of an external monitor CSV: `ts_ms,metric,value`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ExternalSample {
    pub ts_ms: u64,
    pub metric: String,
    pub value: f64,
}

/// Everything on disk for one run.
#[derive(Debug, Clone)]
pub struct RunData {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub throughput: BTreeMap<TapName, Vec<ThroughputRow>>,
    pub latency: BTreeMap<LatencyKind, Vec<LatencyRow>>,
    pub process: Vec<ProcessRow>,
    pub window_slots: Option<Vec<WindowSlot>>,
    pub external: Vec<ExternalSample>,
}

/// Run directories at or below `root`, sorted. A directory is a run when it
/// holds a manifest.
pub fn discover_runs(root: &Path) -> Result<Vec<PathBuf>, PostprocessError> {
    fn walk(dir: &Path, depth: usize, out: &mut Vec<PathBuf>) -> Result<(), PostprocessError> {
        if dir.join(MANIFEST_FILE).is_file() {
            out.push(dir.to_path_buf());
            return Ok(());
        }
        if depth == 0 {
            return Ok(());
        }
        for entry in fs::read_dir(dir).map_err(PostprocessError::io(dir))? {
            let path = entry.map_err(PostprocessError::io(dir))?.path();
            if path.is_dir() {
                walk(&path, depth - 1, out)?;
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, 2, &mut out)?;
    out.sort();
    Ok(out)
}

pub fn load_run(dir: &Path) -> Result<RunData, PostprocessError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = match fs::read_to_string(&manifest_path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(PostprocessError::MissingManifest(dir.to_path_buf()))
        }
        Err(e) => return Err(PostprocessError::io(&manifest_path)(e)),
    };
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| PostprocessError::Manifest {
            path: manifest_path.clone(),
            message: e.to_string(),
        })?;

    let metrics = dir.join("metrics");
    let mut throughput = BTreeMap::new();
    for tap in TapName::ALL {
        throughput.insert(tap, read_rows(&metrics.join(throughput_file(tap)))?);
    }
    let mut latency = BTreeMap::new();
    for kind in LatencyKind::ALL {
        latency.insert(kind, read_rows(&metrics.join(latency_file(kind)))?);
    }
    let process = read_rows(&metrics.join(PROCESS_FILE))?;
    let slots_path = metrics.join(WINDOW_SLOTS_FILE);
    let window_slots = if slots_path.is_file() {
        Some(read_rows(&slots_path)?)
    } else {
        None
    };

    let mut external = Vec::new();
    let ext_dir = dir.join(EXTERNAL_DIR);
    if ext_dir.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(&ext_dir)
            .map_err(PostprocessError::io(&ext_dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        for f in files {
            external.extend(read_rows::<ExternalSample>(&f)?);
        }
    }

    Ok(RunData {
        dir: dir.to_path_buf(),
        manifest,
        throughput,
        latency,
        process,
        window_slots,
        external,
    })
}
