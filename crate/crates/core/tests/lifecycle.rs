mod common;

use std::fs;
use std::path::Path;

use strombench::config::content_hash;
use strombench::metrics::{latency_file, throughput_file, LatencyKind, TapName, PROCESS_FILE};
use strombench::orchestrator::{
    execute_run, run_experiment, ExecutionMode, ExperimentOptions, ModeChoice, OrchestratorError,
    RunManifest, RunStatus, MANIFEST_FILE, RESOLVED_CONFIG_FILE,
};

fn yaml(out: &Path, extra: &str) -> String {
    format!(
        "experiment_name: lc
workload:
  pattern: constant
  total_rate_eps: 20000
event_size_bytes: 27
broker:
  partitions: 4
duration_s: 1
metrics:
  snapshot_interval_ms: 100
output_dir: {}
{extra}",
        out.display()
    )
}

fn with_pipeline(out: &Path, kind: &str, par: &str, extra: &str) -> String {
    yaml(
        out,
        &format!("pipeline:\n  kind: {kind}\n  parallelism: {par}\n{extra}"),
    )
}

#[test]
fn happy_path_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = common::runs_of(&with_pipeline(tmp.path(), "pass_through", "2", ""));
    let o = execute_run(&runs[0], ExecutionMode::Local).unwrap();
    assert_eq!(o.manifest.status, RunStatus::Ok);
    assert!(o.manifest.errors.is_empty());

    let metrics = o.run_dir.join("metrics");
    for tap in TapName::ALL {
        assert!(metrics.join(throughput_file(tap)).is_file(), "{tap:?}");
    }
    for kind in [
        LatencyKind::Driver,
        LatencyKind::Processing,
        LatencyKind::EndToEnd,
    ] {
        assert!(metrics.join(latency_file(kind)).is_file(), "{kind:?}");
    }
    assert!(metrics.join(PROCESS_FILE).is_file());
    assert!(o.run_dir.join("logs/run.log").is_file());

    let m = RunManifest::read(&o.run_dir).unwrap();
    let cfg = fs::read(o.run_dir.join(RESOLVED_CONFIG_FILE)).unwrap();
    assert_eq!(m.config_hash, content_hash(&cfg));
    assert_eq!(m.generator.events_emitted, 20_000);
    let taps: Vec<u64> = TapName::ALL.iter().map(|t| m.taps[t].events).collect();
    assert_eq!(taps, vec![20_000; 4]);
    assert_eq!(m.sink_records, 20_000);
    assert_eq!(m.engine.lag_remaining, 0);
    assert!(m.latency.values().all(|l| l.negative_flags == 0));
}

#[test]
fn engine_startup_failure_stops_before_generators() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = common::runs_of(&with_pipeline(tmp.path(), "pass_through", "8", ""));
    let err = execute_run(&runs[0], ExecutionMode::Local).unwrap_err();
    assert!(
        matches!(
            err,
            OrchestratorError::ComponentStartupFailure {
                component: "engine",
                ..
            }
        ),
        "{err}"
    );
    assert_eq!(err.exit_code(), 2);
    let m = RunManifest::read(&runs[0].run_dir()).unwrap();
    assert_eq!(m.status, RunStatus::Failed);
    assert_eq!(m.generator.events_emitted, 0);
    assert!(!m.errors.is_empty());
}

#[test]
fn drain_timeout_marks_degraded_and_keeps_results() {
    let tmp = tempfile::tempdir().unwrap();
    let runs = common::runs_of(&with_pipeline(
        tmp.path(),
        "memory_intensive",
        "2",
        "drain_timeout_s: 0\n",
    ));
    let err = execute_run(&runs[0], ExecutionMode::Local).unwrap_err();
    assert!(
        matches!(err, OrchestratorError::DrainTimeout { timeout_s: 0, .. }),
        "{err}"
    );
    let dir = runs[0].run_dir();
    let m = RunManifest::read(&dir).unwrap();
    assert_eq!(m.status, RunStatus::Degraded);
    assert!(m.engine.drain_timed_out);
    assert_eq!(m.generator.events_emitted, 20_000);
    assert!(dir
        .join("metrics")
        .join(throughput_file(TapName::Generator))
        .is_file());
}

#[test]
fn matrix_runs_sequentially_and_failures_do_not_block() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.yaml");
    // parallelism 8 exceeds the 4 partitions; the second run must still happen
    fs::write(
        &cfg,
        with_pipeline(tmp.path(), "[pass_through, cpu_intensive]", "[8, 1]", ""),
    )
    .unwrap();
    let out = run_experiment(&ExperimentOptions {
        config_path: cfg,
        mode: ModeChoice::Local,
        ..Default::default()
    })
    .unwrap();
    assert_eq!(out.len(), 4);
    let status: Vec<(&str, bool)> = out
        .iter()
        .map(|s| (s.status.as_str(), s.run_id.contains("par-8")))
        .collect();
    for (st, over) in &status {
        assert_eq!(*st, if *over { "failed" } else { "ok" }, "{status:?}");
    }
    let dirs = fs::read_dir(tmp.path().join("lc")).unwrap().count();
    assert_eq!(dirs, 4);
    for s in &out {
        assert!(tmp
            .path()
            .join("lc")
            .join(&s.run_id)
            .join(MANIFEST_FILE)
            .is_file());
    }
}

#[test]
fn batch_dry_run_writes_chain_without_running() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.yaml");
    fs::write(
        &cfg,
        with_pipeline(tmp.path(), "pass_through", "[1, 2]", "repetitions: 2\n"),
    )
    .unwrap();
    let out = run_experiment(&ExperimentOptions {
        config_path: cfg,
        mode: ModeChoice::SlurmBatch,
        dry_run: true,
        run_id: None,
    })
    .unwrap();
    assert_eq!(out.len(), 4);
    assert!(out.iter().all(|s| s.status == "written" && s.is_ok()));
    let dir = tmp.path().join("lc/sbatch");
    let mut names: Vec<String> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(names.len(), 5);
    assert_eq!(names[4], "submit.sh");
    assert!(names[0].starts_with("001_"));
    // nothing was executed
    assert!(!tmp.path().join("lc").join(&out[0].run_id).exists());
}

#[test]
fn unknown_run_id_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("exp.yaml");
    fs::write(&cfg, with_pipeline(tmp.path(), "pass_through", "1", "")).unwrap();
    let err = run_experiment(&ExperimentOptions {
        config_path: cfg,
        mode: ModeChoice::Local,
        dry_run: false,
        run_id: Some("nope".into()),
    })
    .unwrap_err();
    assert!(matches!(err, OrchestratorError::UnknownRunId(_)));
}
