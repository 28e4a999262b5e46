//! Checks shared by the integration tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use strombench::config::{expand_experiment_matrix, validate_config, ExperimentConfig, RunConfig};
use strombench::orchestrator::emit_chain;
use strombench::postprocess::{postprocess, slope, RunViolation};

pub fn tests_dir(sub: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests")
        .join(sub)
}

pub fn fixture(name: &str) -> PathBuf {
    tests_dir("fixtures").join(name)
}

pub fn runs_of(yaml: &str) -> Vec<RunConfig> {
    let c = validate_config(ExperimentConfig::from_yaml(yaml).unwrap()).unwrap();
    expand_experiment_matrix(&c).unwrap()
}

pub fn hpc_chain() -> Vec<(String, String)> {
    let cfg = ExperimentConfig::load(&fixture("hpc.yaml")).unwrap();
    let runs = expand_experiment_matrix(&validate_config(cfg).unwrap()).unwrap();
    emit_chain(&runs, "configs/hpc.yaml").unwrap()
}

/// Compares the emitted chain with the committed scripts.
pub fn check_golden() -> Result<(), String> {
    let scripts = hpc_chain();
    if scripts.len() != 2 {
        return Err(format!("expected 2 scripts, got {}", scripts.len()));
    }
    for (name, body) in &scripts {
        let expected = fs::read_to_string(tests_dir("golden").join(name))
            .map_err(|e| format!("{name}: {e}"))?;
        if body != &expected {
            return Err(format!("{name} differs from its golden file"));
        }
    }
    if !scripts[1].1.contains("#SBATCH --dependency=afterok:")
        || scripts[0].1.contains("--dependency")
    {
        return Err("dependency chain missing".into());
    }
    Ok(())
}

fn read_csv(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let header = r.headers().unwrap().clone();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            header
                .iter()
                .map(String::from)
                .zip(rec.iter().map(String::from))
                .collect()
        })
        .collect()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

/// Hand-computed expectations for the committed postprocessing fixtures.
pub fn check_postprocess_fixtures() -> Result<(), String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;

    // clean runs: no violations, exact aggregates
    let out = tmp.path().join("clean");
    let s = postprocess(&fixture("postprocess/clean"), &out, 0.1).map_err(|e| e.to_string())?;
    ensure!(
        s.violations.is_empty(),
        "clean fixtures flagged: {:?}",
        s.violations
    );
    ensure!(
        s.reports.len() == 5,
        "expected 5 reports, got {}",
        s.reports.len()
    );
    let summary = read_csv(&out.join("summary.csv"));
    ensure!(summary.len() == 5, "summary has {} rows", summary.len());
    let rep2 = summary
        .iter()
        .find(|r| {
            r["run_id"].ends_with("pass-through_par-1_rep2") && r["offered_rate_eps"] == "100000"
        })
        .ok_or("rep2 missing from summary")?;
    ensure!(
        rep2["broker_in_mean_eps"] == "100000",
        "rep2 mean {}",
        rep2["broker_in_mean_eps"]
    );
    ensure!(
        rep2["broker_in_max_eps"] == "100000",
        "rep2 max {}",
        rep2["broker_in_max_eps"]
    );
    ensure!(
        rep2["samples"] == "8",
        "rep2 kept {} samples",
        rep2["samples"]
    );

    let rate = read_csv(&out.join("scaling_rate.csv"));
    let pass: Vec<_> = rate
        .iter()
        .filter(|r| r["group"].contains("pipeline=pass_through"))
        .collect();
    ensure!(pass.len() == 2, "pass-through rate rows: {}", pass.len());
    let expect = [
        ("100000", "3", "100000", "2000", "false"),
        ("200000", "1", "200000", "0", "true"),
    ];
    for (row, (x, n, mean, std, single)) in pass.iter().zip(expect) {
        let got = (
            row["offered_rate_eps"].as_str(),
            row["n"].as_str(),
            row["throughput_mean_eps"].as_str(),
            row["throughput_std_eps"].as_str(),
            row["single_rep"].as_str(),
        );
        ensure!(
            got == (x, n, mean, std, single),
            "rate row {got:?}, expected {:?}",
            (x, n, mean, std, single)
        );
        ensure!(row["p99_mean_us"] == "20", "p99 {}", row["p99_mean_us"]);
    }
    let points: Vec<(f64, f64)> = pass
        .iter()
        .map(|r| {
            (
                r["offered_rate_eps"].parse().unwrap(),
                r["throughput_mean_eps"].parse().unwrap(),
            )
        })
        .collect();
    ensure!(slope(&points) == Some(1.0), "slope {:?}", slope(&points));

    // trimmed, normalized series with the external column merged
    let ts = out
        .join("timeseries")
        .join("pattern-constant_rate-100000_size-27_pipeline-pass-through_par-1_rep1");
    let proc = read_csv(&ts.join("process.csv"));
    let t: Vec<&str> = proc.iter().map(|r| r["t_norm"].as_str()).collect();
    ensure!(
        t.first() == Some(&"0") && t.last() == Some(&"1") && t.len() == 8,
        "t_norm {t:?}"
    );
    let gpu: Vec<&str> = proc.iter().map(|r| r["ext_gpu_util"].as_str()).collect();
    ensure!(
        gpu == ["24", "", "", "", "56", "", "", "90"],
        "external column {gpu:?}"
    );
    for f in ["throughput_broker_in.csv", "latency_end_to_end.csv"] {
        for r in read_csv(&ts.join(f)) {
            let v: f64 = r["t_norm"].parse().unwrap();
            ensure!((0.0..=1.0).contains(&v), "{f}: t_norm {v}");
        }
    }

    // idempotence: a second pass, into the same and into a fresh directory
    let first = snapshot(&out);
    postprocess(&fixture("postprocess/clean"), &out, 0.1).map_err(|e| e.to_string())?;
    ensure!(
        snapshot(&out) == first,
        "rerun into the same directory changed outputs"
    );
    let again = tmp.path().join("again");
    postprocess(&fixture("postprocess/clean"), &again, 0.1).map_err(|e| e.to_string())?;
    ensure!(
        snapshot(&again) == first,
        "outputs are not byte-identical across passes"
    );

    // every injected violation class is detected, and only there
    let s = postprocess(
        &fixture("postprocess/violations"),
        &tmp.path().join("v"),
        0.1,
    )
    .map_err(|e| e.to_string())?;
    let by_run = |id: &str| -> Vec<&RunViolation> {
        s.violations
            .iter()
            .filter(|(r, _)| r == id)
            .map(|(_, v)| v)
            .collect()
    };
    let v = by_run("truncated-broker-out");
    ensure!(
        matches!(
            v.as_slice(),
            [RunViolation::Conservation {
                expected: 900000,
                actual: 450000,
                delta: -450000,
                ..
            }]
        ),
        "truncated-broker-out: {v:?}"
    );
    let v = by_run("negative-latency");
    ensure!(
        matches!(v.as_slice(), [RunViolation::Latency { flags: 1, .. }]),
        "negative-latency: {v:?}"
    );
    let v = by_run("non-monotonic");
    ensure!(
        matches!(
            v.as_slice(),
            [RunViolation::NonMonotonic {
                index: 4,
                ts_ms: 4000,
                prev_ms: 4000,
                ..
            }]
        ),
        "non-monotonic: {v:?}"
    );
    let v = by_run("missing-window-slots");
    ensure!(
        matches!(v.as_slice(), [RunViolation::MissingWindowSlots]),
        "missing-window-slots: {v:?}"
    );
    let v = by_run("wrong-window-count");
    ensure!(
        matches!(
            v.as_slice(),
            [RunViolation::Conservation {
                expected: 5,
                actual: 900000,
                delta: 899995,
                ..
            }]
        ),
        "wrong-window-count: {v:?}"
    );
    ensure!(
        s.violations.len() == 5,
        "unexpected extra violations: {:?}",
        s.violations
    );
    Ok(())
}
