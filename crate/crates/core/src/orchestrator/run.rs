use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use tracing::{error, info, warn};

use super::manifest::{
    EngineSummary, RunManifest, RunStatus, RESOLVED_CONFIG_FILE, WINDOW_SLOTS_FILE,
};
use super::{
    compute_resources, detect_environment, emit_chain, interactive_guard, write_chain,
    ExecutionMode, OrchestratorError, DEPENDENCY_PLACEHOLDER,
};
use crate::broker::{Broker, BrokerError, PartitionLease, Topic};
use crate::clock::{self, SystemClock};
use crate::config::{expand_experiment_matrix, validate_config, ExperimentConfig, RunConfig};
use crate::engine::{EngineError, EngineHandle, EngineStats, EngineTaps, PipelineKind};
use crate::metrics::{MetricsRegistry, ProcProbe, SnapshotHandle, TapName};
use crate::workload::{plan_generators, run_generator, GeneratorError, RunOptions};

const INPUT_TOPIC: &str = "ingest";
const OUTPUT_TOPIC: &str = "egress";
const ENGINE_GROUP: &str = "engine";
const SINK_GROUP: &str = "sink";
const LOG_TAIL_LINES: usize = 20;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub manifest: RunManifest,
}

fn hostname() -> String {
    let mut buf = [0u8; 256];
    // SAFETY: the buffer is valid for its full length.
    let rc = unsafe { libc::gethostname(buf.as_mut_ptr().cast(), buf.len()) };
    if rc != 0 {
        return "unknown".to_string();
    }
    let end = buf.iter().position(|&b| b == 0).unwrap_or(buf.len());
    String::from_utf8_lossy(&buf[..end]).into_owned()
}

fn log_tail(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap_or_default();
    let lines: Vec<&str> = text.lines().collect();
    lines[lines.len().saturating_sub(LOG_TAIL_LINES)..].join("\n")
}

/// Consumes the egress topic so it never fills up, counting what arrives.
struct Sink {
    stop: Arc<AtomicBool>,
    thread: JoinHandle<Result<u64, BrokerError>>,
}

impl Sink {
    fn spawn(topic: &Arc<Topic>) -> Result<Self, BrokerError> {
        let leases: Vec<PartitionLease> = (0..topic.partition_count())
            .map(|p| topic.assign(SINK_GROUP, p))
            .collect::<Result<_, _>>()?;
        let stop = Arc::new(AtomicBool::new(false));
        let flag = stop.clone();
        let thread = thread::Builder::new()
            .name("egress-sink".into())
            .spawn(move || {
                let mut count = 0u64;
                loop {
                    let stopping = flag.load(Ordering::Acquire);
                    let mut progressed = false;
                    for lease in &leases {
                        let batch = lease.consume(4096)?;
                        if let Some(last) = batch.last() {
                            count += batch.len() as u64;
                            lease.commit(last.offset + 1)?;
                            progressed = true;
                        }
                    }
                    if !progressed {
                        if stopping {
                            return Ok(count);
                        }
                        thread::sleep(Duration::from_millis(1));
                    }
                }
            })
            .expect("spawn sink thread");
        Ok(Self { stop, thread })
    }

    fn finish(self) -> Result<u64, BrokerError> {
        self.stop.store(true, Ordering::Release);
        self.thread.join().expect("sink thread panicked")
    }
}

fn write_window_slots(path: &Path, stats: &EngineStats) -> Result<(), OrchestratorError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| OrchestratorError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    let res = stats
        .window_slots
        .iter()
        .try_for_each(|s| w.serialize(s))
        .and_then(|_| w.flush().map_err(Into::into));
    res.map_err(|e| OrchestratorError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })
}

/// Component lifecycle; the caller owns the manifest file.
fn lifecycle(
    run: &RunConfig,
    dir: &Path,
    log_path: &Path,
    manifest: &mut RunManifest,
) -> Result<(), OrchestratorError> {
    let startup = |component: &'static str, message: String| {
        error!(component, %message, "startup failed");
        OrchestratorError::ComponentStartupFailure {
            component,
            message,
            log_tail: log_tail(log_path),
        }
    };
    let failed = |message: String| {
        error!(%message, "run failed");
        OrchestratorError::RunFailed {
            run_id: run.run_id.clone(),
            message,
        }
    };

    // broker
    let broker = Broker::new();
    let input = broker
        .create_topic(
            INPUT_TOPIC,
            run.broker.partitions,
            run.broker.partition_capacity,
        )
        .map_err(|e| startup("broker", e.to_string()))?;
    let output = broker
        .create_topic(
            OUTPUT_TOPIC,
            run.broker.partitions,
            run.broker.partition_capacity,
        )
        .map_err(|e| startup("broker", e.to_string()))?;
    output.register_group(SINK_GROUP);
    info!(partitions = run.broker.partitions, "broker topics created");

    // engine: its group exists before any generator produces
    let registry = MetricsRegistry::new(run.metrics.latency_sample_every);
    let taps = EngineTaps {
        registry: registry.clone(),
    };
    let engine = EngineHandle::start(&run.pipeline, &input, &output, ENGINE_GROUP, Some(&taps))
        .map_err(|e| startup("engine", e.to_string()))?;
    info!(
        kind = run.pipeline.kind.as_str(),
        parallelism = run.pipeline.parallelism,
        "engine started"
    );
    let sink = match Sink::spawn(&output) {
        Ok(s) => s,
        Err(e) => {
            let _ = engine.abort();
            return Err(startup("sink", e.to_string()));
        }
    };

    let snapshots = match SnapshotHandle::spawn(
        registry.clone(),
        Box::new(ProcProbe::default()),
        run.metrics.snapshot_interval_ms,
        &dir.join("metrics"),
    ) {
        Ok(h) => h,
        Err(e) => {
            let _ = engine.abort();
            let _ = sink.finish();
            return Err(startup("snapshotter", e.to_string()));
        }
    };
    info!(
        interval_ms = run.metrics.snapshot_interval_ms,
        "snapshotter started"
    );

    let mut failure = None;
    match plan_generators(
        run.workload.peak_rate_eps(),
        run.workload.per_instance_cap_eps,
    ) {
        Err(e) => failure = Some(failed(e.to_string())),
        Ok(plan) => {
            let plan = plan.with_seed(run.seed);
            let n = plan.instance_count;
            info!(
                instances = n,
                rate_eps = run.workload.total_rate_eps,
                "generators started"
            );
            let opts = RunOptions {
                generator_taps: (0..n)
                    .map(|i| registry.recorder(TapName::Generator, i))
                    .collect(),
                broker_in_taps: (0..n)
                    .map(|i| registry.recorder(TapName::BrokerIn, i))
                    .collect(),
                stop: None,
            };
            let result = run_generator(
                &plan,
                &run.workload,
                &*input,
                run.duration_s as f64,
                run.event_size_bytes,
                &SystemClock,
                opts,
            );
            match result {
                Ok(report) => manifest.generator = (&report).into(),
                Err(GeneratorError::SinkClosed { partial }) => {
                    manifest.generator = (&partial).into();
                    failure = Some(failed("broker closed while generators were running".into()));
                }
                Err(e) => failure = Some(failed(e.to_string())),
            }
            info!(
                events = manifest.generator.events_emitted,
                "generators stopped"
            );
        }
    }

    let timeout = Duration::from_secs(run.drain_timeout_s);
    let (stats, timed_out) = match engine.drain(Some(timeout)) {
        Ok(s) => (s, false),
        Err(EngineError::DrainTimeout { stats }) => {
            warn!(timeout_s = run.drain_timeout_s, "engine drain timed out");
            (*stats, true)
        }
        Err(e) => {
            failure.get_or_insert_with(|| failed(e.to_string()));
            (EngineStats::default(), false)
        }
    };
    let lag: u64 = input.lag(ENGINE_GROUP).map(|l| l.iter().sum()).unwrap_or(0);
    info!(
        records_in = stats.records_in,
        records_out = stats.records_out,
        lag,
        "engine stopped"
    );
    manifest.engine = EngineSummary::from_stats(&stats, timed_out, lag);
    match sink.finish() {
        Ok(n) => manifest.sink_records = n,
        Err(e) => {
            failure.get_or_insert_with(|| failed(e.to_string()));
        }
    }
    match snapshots.stop() {
        Ok(n) => manifest.snapshots = n,
        Err(e) => {
            failure.get_or_insert_with(|| failed(format!("snapshotter: {e}")));
        }
    }
    manifest.fill_metrics(&registry);
    if run.pipeline.kind == PipelineKind::MemoryIntensive {
        write_window_slots(&dir.join("metrics").join(WINDOW_SLOTS_FILE), &stats)?;
    }

    if let Some(f) = failure {
        return Err(f);
    }
    if timed_out {
        return Err(OrchestratorError::DrainTimeout {
            run_id: run.run_id.clone(),
            timeout_s: run.drain_timeout_s,
        });
    }
    info!("run complete");
    Ok(())
}

/// Executes one run into `<output_dir>/<experiment>/<run_id>/`.
///
/// The manifest is written even when the run fails; a drain timeout keeps
/// the partial results and marks the run degraded.
pub fn execute_run(run: &RunConfig, mode: ExecutionMode) -> Result<RunOutcome, OrchestratorError> {
    let resources = compute_resources(run)?;
    let dir = run.run_dir();
    let metrics_dir = dir.join("metrics");
    let logs_dir = dir.join("logs");
    for d in [&metrics_dir, &logs_dir] {
        fs::create_dir_all(d).map_err(OrchestratorError::io(d))?;
    }
    let yaml = run.to_yaml();
    let cfg_path = dir.join(RESOLVED_CONFIG_FILE);
    fs::write(&cfg_path, &yaml).map_err(OrchestratorError::io(&cfg_path))?;

    let log_path = logs_dir.join("run.log");
    let log_file = File::create(&log_path).map_err(OrchestratorError::io(&log_path))?;
    let subscriber = tracing_subscriber::fmt()
        .with_writer(Mutex::new(log_file))
        .with_ansi(false)
        .with_target(false)
        .finish();
    let _log = tracing::subscriber::set_default(subscriber);
    info!(run_id = %run.run_id, host = %hostname(), mode = mode.as_str(), "run starting");

    let mut manifest = RunManifest {
        run_id: run.run_id.clone(),
        experiment_name: run.experiment_name.clone(),
        repetition: run.repetition,
        status: RunStatus::Ok,
        errors: Vec::new(),
        mode,
        host: hostname(),
        version: crate::VERSION.to_string(),
        config_file: RESOLVED_CONFIG_FILE.to_string(),
        config_hash: crate::config::content_hash(yaml.as_bytes()),
        parameters: run.parameters.clone(),
        pipeline: run.pipeline.clone(),
        resources: Some(resources),
        started_at_ms: clock::now_ms(),
        finished_at_ms: 0,
        snapshots: 0,
        generator: Default::default(),
        engine: Default::default(),
        sink_records: 0,
        taps: Default::default(),
        latency: Default::default(),
    };
    let result = lifecycle(run, &dir, &log_path, &mut manifest);
    manifest.finished_at_ms = clock::now_ms();
    if let Err(e) = &result {
        manifest.status = match e {
            OrchestratorError::DrainTimeout { .. } => RunStatus::Degraded,
            _ => RunStatus::Failed,
        };
        manifest.errors.push(e.to_string());
    }
    manifest.write(&dir)?;
    result.map(|()| RunOutcome {
        run_dir: dir,
        manifest,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ModeChoice {
    #[default]
    Auto,
    Local,
    SlurmInteractive,
    SlurmBatch,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOptions {
    pub config_path: PathBuf,
    pub mode: ModeChoice,
    pub dry_run: bool,
    /// Execute only this run; used inside batch jobs.
    pub run_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub run_id: String,
    pub status: String,
    pub detail: String,
}

impl RunSummary {
    pub fn is_ok(&self) -> bool {
        matches!(self.status.as_str(), "ok" | "written" | "submitted")
    }
}

fn submit(scripts: &[(String, String)]) -> Result<Vec<String>, OrchestratorError> {
    let mut ids: Vec<String> = Vec::new();
    for (name, body) in scripts {
        let body = match ids.last() {
            Some(prev) => body.replace(DEPENDENCY_PLACEHOLDER, prev),
            None => body.clone(),
        };
        let mut child = Command::new("sbatch")
            .arg("--parsable")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| OrchestratorError::Submission(format!("cannot run sbatch: {e}")))?;
        child
            .stdin
            .take()
            .expect("piped stdin")
            .write_all(body.as_bytes())
            .map_err(|e| OrchestratorError::Submission(e.to_string()))?;
        let out = child
            .wait_with_output()
            .map_err(|e| OrchestratorError::Submission(e.to_string()))?;
        if !out.status.success() {
            return Err(OrchestratorError::Submission(format!(
                "{name}: {}",
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let stdout = String::from_utf8_lossy(&out.stdout);
        ids.push(
            stdout
                .trim()
                .split(';')
                .next()
                .unwrap_or_default()
                .to_string(),
        );
    }
    Ok(ids)
}

/// Expands the experiment and executes it in the resolved mode.
///
/// Local and interactive runs execute sequentially; a failing run is
/// recorded and the next one still starts. Batch mode writes one chained
/// script per run and submits them unless `dry_run`.
pub fn run_experiment(opts: &ExperimentOptions) -> Result<Vec<RunSummary>, OrchestratorError> {
    let config = validate_config(ExperimentConfig::load(&opts.config_path)?)?;
    let mut runs = expand_experiment_matrix(&config)?;
    let env = detect_environment();
    let mode = match opts.mode {
        ModeChoice::Auto => env.mode,
        ModeChoice::Local => ExecutionMode::Local,
        ModeChoice::SlurmInteractive => ExecutionMode::SlurmInteractive,
        ModeChoice::SlurmBatch => ExecutionMode::SlurmBatch,
    };
    if let Some(id) = &opts.run_id {
        runs.retain(|r| &r.run_id == id);
        if runs.is_empty() {
            return Err(OrchestratorError::UnknownRunId(id.clone()));
        }
    }

    if mode == ExecutionMode::SlurmBatch && opts.run_id.is_none() {
        let config_path = opts
            .config_path
            .canonicalize()
            .unwrap_or_else(|_| opts.config_path.clone());
        let scripts = emit_chain(&runs, &config_path.to_string_lossy())?;
        let dir = config
            .get()
            .output_dir
            .join(&config.get().experiment_name)
            .join("sbatch");
        write_chain(&dir, &scripts)?;
        let ids = if opts.dry_run {
            Vec::new()
        } else {
            submit(&scripts)?
        };
        return Ok(runs
            .iter()
            .zip(&scripts)
            .enumerate()
            .map(|(i, (r, (name, _)))| RunSummary {
                run_id: r.run_id.clone(),
                status: if opts.dry_run { "written" } else { "submitted" }.to_string(),
                detail: match ids.get(i) {
                    Some(id) => format!("job {id}"),
                    None => dir.join(name).display().to_string(),
                },
            })
            .collect());
    }

    let mut out = Vec::with_capacity(runs.len());
    for run in &runs {
        let result = compute_resources(run)
            .and_then(|req| interactive_guard(&req, &env))
            .and_then(|()| execute_run(run, mode));
        out.push(match result {
            Ok(o) => RunSummary {
                run_id: run.run_id.clone(),
                status: o.manifest.status.as_str().to_string(),
                detail: o.run_dir.display().to_string(),
            },
            Err(e) => RunSummary {
                run_id: run.run_id.clone(),
                status: match e {
                    OrchestratorError::DrainTimeout { .. } => RunStatus::Degraded,
                    _ => RunStatus::Failed,
                }
                .as_str()
                .to_string(),
                detail: e.to_string().lines().next().unwrap_or_default().to_string(),
            },
        });
    }
    Ok(out)
}
