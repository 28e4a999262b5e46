mod common;

use std::fs;
use std::process::{Command, Output};

fn strombench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_strombench"))
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn version_prints() {
    let o = strombench(&["version"]);
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("strombench "));
}

#[test]
fn validate_lists_runs() {
    let cfg = common::fixture("hpc.yaml");
    let o = strombench(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8_lossy(&o.stdout);
    assert!(out.ends_with("2 run(s)\n"), "{out}");
}

#[test]
fn invalid_config_exits_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.yaml");
    let text = fs::read_to_string(common::fixture("hpc.yaml"))
        .unwrap()
        .replace("event_size_bytes: 27", "event_size_bytes: 20");
    fs::write(&cfg, text).unwrap();
    let o = strombench(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("event_size_bytes"));

    assert_eq!(code(&strombench(&["run"])), 1);
    assert_eq!(
        code(&strombench(&["validate", "--config", "/nonexistent.yaml"])),
        1
    );
}

#[test]
fn emit_sbatch_writes_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = common::fixture("hpc.yaml");
    let o = strombench(&[
        "emit-sbatch",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_dir(tmp.path()).unwrap().count(), 3);
    let second = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().starts_with("002_"))
        .unwrap();
    assert!(fs::read_to_string(second)
        .unwrap()
        .contains("--dependency=afterok:"));
}

#[test]
fn batch_dry_run_reports_written() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("hpc.yaml");
    let text = fs::read_to_string(common::fixture("hpc.yaml")).unwrap();
    fs::write(
        &cfg,
        format!("{text}output_dir: {}\n", tmp.path().display()),
    )
    .unwrap();
    let o = strombench(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--mode",
        "slurm-batch",
        "--dry-run",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.matches("written").count(), 2, "{out}");
    assert!(tmp.path().join("hpc/sbatch/submit.sh").is_file());
}

#[test]
fn postprocess_exit_codes() {
    let o = strombench(&["postprocess", "--results", "/nonexistent-results"]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));

    let tmp = tempfile::tempdir().unwrap();
    let clean = common::fixture("postprocess/clean");
    let out = tmp.path().join("clean");
    let o = strombench(&[
        "postprocess",
        "--results",
        clean.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("summary.csv").is_file());

    let bad = common::fixture("postprocess/violations");
    let out = tmp.path().join("bad");
    let o = strombench(&[
        "postprocess",
        "--results",
        bad.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
    assert_eq!(
        String::from_utf8_lossy(&o.stderr)
            .matches("violation in")
            .count(),
        5
    );

    let o = strombench(&[
        "postprocess",
        "--results",
        clean.to_str().unwrap(),
        "--warmup",
        "0.7",
    ]);
    assert_eq!(code(&o), 1);
}
