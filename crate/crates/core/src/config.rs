//! Master experiment configuration: parsing, validation and run-matrix
//! expansion.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::broker::DEFAULT_PARTITION_CAPACITY;
use crate::engine::{
    PipelineDefinition, PipelineKind, TimeDomain, DEFAULT_THRESHOLD_F, DEFAULT_WINDOW_LEN_MS,
    DEFAULT_WINDOW_SLIDE_MS,
};
use crate::event::{max_compact_len, MAX_EVENT_SIZE, MIN_EVENT_SIZE};
use crate::workload::{self, BurstSpec, Pattern, RandomSpec, WorkloadSpec};

pub const DEFAULT_MAX_RUNS: usize = 10_000;

/// A scalar or a list of alternatives; lists expand into the run matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }

    fn len(&self) -> usize {
        match self {
            OneOrMany::One(_) => 1,
            OneOrMany::Many(v) => v.len(),
        }
    }
}

impl<T> From<T> for OneOrMany<T> {
    fn from(v: T) -> Self {
        OneOrMany::One(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub pattern: Pattern,
    pub total_rate_eps: OneOrMany<u64>,
    #[serde(default = "workload::default_cap")]
    pub per_instance_cap_eps: u64,
    #[serde(default = "workload::default_num_sensors")]
    pub num_sensors: u64,
    #[serde(default)]
    pub min_temp_c: f64,
    #[serde(default = "workload::default_max_temp")]
    pub max_temp_c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burst: Option<BurstSpec>,
}

impl WorkloadConfig {
    fn resolve(&self, total_rate_eps: u64) -> WorkloadSpec {
        WorkloadSpec {
            pattern: self.pattern,
            total_rate_eps,
            per_instance_cap_eps: self.per_instance_cap_eps,
            num_sensors: self.num_sensors,
            min_temp_c: self.min_temp_c,
            max_temp_c: self.max_temp_c,
            random: self.random,
            burst: self.burst,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrokerConfig {
    pub partitions: usize,
    #[serde(default = "default_capacity")]
    pub partition_capacity: usize,
}

fn default_capacity() -> usize {
    DEFAULT_PARTITION_CAPACITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub kind: OneOrMany<PipelineKind>,
    pub parallelism: OneOrMany<usize>,
    #[serde(default = "default_threshold")]
    pub threshold_f: f64,
    #[serde(default = "default_window_len")]
    pub window_len_ms: u64,
    #[serde(default = "default_window_slide")]
    pub window_slide_ms: u64,
    #[serde(default)]
    pub parse_in_passthrough: bool,
    #[serde(default)]
    pub time_domain: TimeDomain,
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD_F
}

fn default_window_len() -> u64 {
    DEFAULT_WINDOW_LEN_MS
}

fn default_window_slide() -> u64 {
    DEFAULT_WINDOW_SLIDE_MS
}

/// Requested allocation per run. Unset fields fall back to the computed
/// minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourcesConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpus: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mem_gb: Option<u32>,
    #[serde(default = "one")]
    pub nodes: u32,
    #[serde(default = "default_engine_mem")]
    pub engine_mem_gb: u32,
}

impl Default for ResourcesConfig {
    fn default() -> Self {
        Self {
            cpus: None,
            mem_gb: None,
            nodes: 1,
            engine_mem_gb: default_engine_mem(),
        }
    }
}

fn one() -> u32 {
    1
}

fn default_engine_mem() -> u32 {
    4
}

/// Upper bounds of the target cluster.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterLimits {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cpus: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_mem_gb: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_nodes: Option<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    #[serde(default = "default_interval")]
    pub snapshot_interval_ms: u64,
    #[serde(default = "default_sample_every")]
    pub latency_sample_every: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            snapshot_interval_ms: default_interval(),
            latency_sample_every: default_sample_every(),
        }
    }
}

fn default_interval() -> u64 {
    crate::metrics::DEFAULT_SNAPSHOT_INTERVAL_MS
}

fn default_sample_every() -> u64 {
    1
}

/// Options for the SLURM path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlurmConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub account: Option<String>,
    /// Command used to invoke the harness inside a job.
    #[serde(default = "default_harness_cmd")]
    pub harness_cmd: String,
}

impl Default for SlurmConfig {
    fn default() -> Self {
        Self {
            partition: None,
            account: None,
            harness_cmd: default_harness_cmd(),
        }
    }
}

fn default_harness_cmd() -> String {
    "strombench".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment_name: String,
    pub workload: OneOrMany<WorkloadConfig>,
    pub event_size_bytes: OneOrMany<usize>,
    pub broker: BrokerConfig,
    pub pipeline: PipelineConfig,
    pub duration_s: u64,
    #[serde(default = "one")]
    pub repetitions: u32,
    #[serde(default)]
    pub resources: ResourcesConfig,
    #[serde(default)]
    pub limits: ClusterLimits,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub slurm: SlurmConfig,
    #[serde(default = "default_drain_timeout")]
    pub drain_timeout_s: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_max_runs")]
    pub max_runs: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_drain_timeout() -> u64 {
    30
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

fn default_max_runs() -> usize {
    DEFAULT_MAX_RUNS
}

/// One configuration problem, located by its key path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] serde_yaml::Error),
    #[error("invalid configuration:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Validation(Vec<Violation>),
    #[error("run matrix has {runs} runs, above the cap of {cap}")]
    MatrixTooLarge { runs: usize, cap: usize },
}

impl ConfigError {
    pub fn violations(&self) -> &[Violation] {
        match self {
            ConfigError::Validation(v) => v,
            _ => &[],
        }
    }
}

impl ExperimentConfig {
    pub fn from_yaml(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_yaml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_yaml(&text)
    }

    fn workloads(&self) -> Vec<WorkloadConfig> {
        self.workload.values()
    }
}

/// A configuration that passed [`validate_config`].
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig(ExperimentConfig);

impl ValidatedConfig {
    pub fn get(&self) -> &ExperimentConfig {
        &self.0
    }

    pub fn into_inner(self) -> ExperimentConfig {
        self.0
    }
}

impl std::ops::Deref for ValidatedConfig {
    type Target = ExperimentConfig;

    fn deref(&self) -> &ExperimentConfig {
        &self.0
    }
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
}

fn push(v: &mut Vec<Violation>, path: String, message: &str) {
    v.push(Violation {
        path,
        message: message.to_string(),
    })
}

/// Checks every invariant and reports all violations at once.
pub fn validate_config(c: ExperimentConfig) -> Result<ValidatedConfig, ConfigError> {
    let mut v = Vec::new();

    if !is_identifier(&c.experiment_name) {
        push(
            &mut v,
            "experiment_name".into(),
            "must be a non-empty identifier of [A-Za-z0-9._-]",
        );
    }

    let workloads = c.workloads();
    if workloads.is_empty() {
        push(
            &mut v,
            "workload".into(),
            "must contain at least one workload",
        );
    }
    let many = matches!(c.workload, OneOrMany::Many(_));
    for (i, w) in workloads.iter().enumerate() {
        let prefix = if many {
            format!("workload[{i}]")
        } else {
            "workload".to_string()
        };
        let rates = w.total_rate_eps.values();
        if rates.is_empty() {
            push(
                &mut v,
                format!("{prefix}.total_rate_eps"),
                "must not be an empty list",
            );
        }
        for rate in rates.iter().copied().chain(rates.is_empty().then_some(1)) {
            for (key, msg) in w.resolve(rate).violations() {
                let path = format!("{prefix}.{key}");
                if !v.iter().any(|x| x.path == path) {
                    push(&mut v, path, &msg);
                }
            }
        }
    }

    let sizes = c.event_size_bytes.values();
    if sizes.is_empty() {
        push(
            &mut v,
            "event_size_bytes".into(),
            "must not be an empty list",
        );
    }
    for &size in &sizes {
        if size < MIN_EVENT_SIZE {
            push(
                &mut v,
                "event_size_bytes".into(),
                &format!("{size} is below the minimum event size of {MIN_EVENT_SIZE} bytes"),
            );
            continue;
        }
        if size > MAX_EVENT_SIZE {
            push(
                &mut v,
                "event_size_bytes".into(),
                &format!("{size} exceeds the maximum of {MAX_EVENT_SIZE} bytes"),
            );
            continue;
        }
        for w in &workloads {
            if let Ok(needed) = max_compact_len(w.num_sensors, w.min_temp_c, w.max_temp_c) {
                if size < needed {
                    let msg = format!(
                        "{size} bytes cannot hold events with {} sensors and temperatures \
                         in [{}, {}]; at least {needed} bytes are needed",
                        w.num_sensors, w.min_temp_c, w.max_temp_c
                    );
                    push(&mut v, "event_size_bytes".into(), &msg);
                }
            }
        }
    }

    if c.broker.partitions < 1 {
        push(&mut v, "broker.partitions".into(), "must be at least 1");
    }
    if c.broker.partition_capacity < 1 {
        push(
            &mut v,
            "broker.partition_capacity".into(),
            "must be at least 1",
        );
    }

    let p = &c.pipeline;
    if p.kind.len() == 0 {
        push(&mut v, "pipeline.kind".into(), "must not be an empty list");
    }
    let pars = p.parallelism.values();
    if pars.is_empty() {
        push(
            &mut v,
            "pipeline.parallelism".into(),
            "must not be an empty list",
        );
    }
    if pars.iter().any(|&x| x < 1) {
        push(&mut v, "pipeline.parallelism".into(), "must be at least 1");
    }
    if !p.threshold_f.is_finite() {
        push(&mut v, "pipeline.threshold_f".into(), "must be finite");
    }
    if p.window_len_ms < 1 {
        push(
            &mut v,
            "pipeline.window_len_ms".into(),
            "must be at least 1",
        );
    }
    if p.window_slide_ms < 1 {
        push(
            &mut v,
            "pipeline.window_slide_ms".into(),
            "must be at least 1",
        );
    } else if p.window_slide_ms > p.window_len_ms {
        push(
            &mut v,
            "pipeline.window_slide_ms".into(),
            "must not exceed window_len_ms",
        );
    } else if !p.window_len_ms.is_multiple_of(p.window_slide_ms) {
        push(
            &mut v,
            "pipeline.window_slide_ms".into(),
            "must divide window_len_ms",
        );
    }

    if c.duration_s < 1 {
        push(&mut v, "duration_s".into(), "must be at least 1");
    }
    if c.repetitions < 1 {
        push(&mut v, "repetitions".into(), "must be at least 1");
    }
    if c.resources.nodes < 1 {
        push(&mut v, "resources.nodes".into(), "must be at least 1");
    }
    if c.resources.cpus == Some(0) {
        push(&mut v, "resources.cpus".into(), "must be at least 1");
    }
    if c.metrics.snapshot_interval_ms < crate::metrics::MIN_SNAPSHOT_INTERVAL_MS {
        push(
            &mut v,
            "metrics.snapshot_interval_ms".into(),
            &format!(
                "must be at least {} ms",
                crate::metrics::MIN_SNAPSHOT_INTERVAL_MS
            ),
        );
    }
    if c.metrics.latency_sample_every < 1 {
        push(
            &mut v,
            "metrics.latency_sample_every".into(),
            "must be at least 1",
        );
    }
    if c.max_runs < 1 {
        push(&mut v, "max_runs".into(), "must be at least 1");
    }
    if c.output_dir.as_os_str().is_empty() {
        push(&mut v, "output_dir".into(), "must not be empty");
    }

    if v.is_empty() {
        Ok(ValidatedConfig(c))
    } else {
        Err(ConfigError::Validation(v))
    }
}

/// One cell of the run matrix with every parameter fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub experiment_name: String,
    pub run_id: String,
    pub repetition: u32,
    pub parameters: BTreeMap<String, String>,
    pub workload: WorkloadSpec,
    pub event_size_bytes: usize,
    pub broker: BrokerConfig,
    pub pipeline: PipelineDefinition,
    pub duration_s: u64,
    pub repetitions: u32,
    pub resources: ResourcesConfig,
    pub limits: ClusterLimits,
    pub metrics: MetricsConfig,
    pub slurm: SlurmConfig,
    pub drain_timeout_s: u64,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl RunConfig {
    /// `<output_dir>/<experiment>/<run_id>`
    pub fn run_dir(&self) -> PathBuf {
        self.output_dir
            .join(&self.experiment_name)
            .join(&self.run_id)
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("run config serializes")
    }

    /// SHA-256 of the resolved YAML, hex encoded.
    pub fn content_hash(&self) -> String {
        content_hash(self.to_yaml().as_bytes())
    }
}

pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn slug_value(s: &str) -> String {
    s.to_ascii_lowercase()
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' {
                c
            } else {
                '-'
            }
        })
        .collect()
}

fn seed_for(base: u64, run_id: &str) -> u64 {
    base ^ u64::from_le_bytes(Sha256::digest(run_id.as_bytes())[..8].try_into().unwrap())
}

/// Cartesian product of every list-valued parameter, times repetitions.
///
/// Order: workload, rate, event size, pipeline kind, parallelism, then
/// repetition innermost. Run ids are `<key-value>_..._rep<k>` with `k`
/// starting at 1.
pub fn expand_experiment_matrix(c: &ValidatedConfig) -> Result<Vec<RunConfig>, ConfigError> {
    let workloads = c.workloads();
    let sizes = c.event_size_bytes.values();
    let kinds = c.pipeline.kind.values();
    let pars = c.pipeline.parallelism.values();
    let rate_cells: usize = workloads.iter().map(|w| w.total_rate_eps.len()).sum();
    let runs = rate_cells
        .saturating_mul(sizes.len())
        .saturating_mul(kinds.len())
        .saturating_mul(pars.len())
        .saturating_mul(c.repetitions as usize);
    if runs > c.max_runs {
        return Err(ConfigError::MatrixTooLarge {
            runs,
            cap: c.max_runs,
        });
    }

    let mut out = Vec::with_capacity(runs);
    for (wi, w) in workloads.iter().enumerate() {
        for rate in w.total_rate_eps.values() {
            for &size in &sizes {
                for &kind in &kinds {
                    for &par in &pars {
                        let mut params = Vec::new();
                        if workloads.len() > 1 {
                            params.push(("workload", wi.to_string()));
                        }
                        params.push(("pattern", w.pattern.as_str().to_string()));
                        params.push(("rate", rate.to_string()));
                        params.push(("size", size.to_string()));
                        params.push(("pipeline", kind.as_str().to_string()));
                        params.push(("par", par.to_string()));
                        let slug = params
                            .iter()
                            .map(|(k, v)| format!("{k}-{}", slug_value(v)))
                            .collect::<Vec<_>>()
                            .join("_");
                        for rep in 1..=c.repetitions {
                            let run_id = format!("{slug}_rep{rep}");
                            out.push(RunConfig {
                                experiment_name: c.experiment_name.clone(),
                                seed: seed_for(c.seed, &run_id),
                                run_id,
                                repetition: rep,
                                parameters: params
                                    .iter()
                                    .map(|(k, v)| (k.to_string(), v.clone()))
                                    .collect(),
                                workload: w.resolve(rate),
                                event_size_bytes: size,
                                broker: c.broker,
                                pipeline: PipelineDefinition {
                                    kind,
                                    parallelism: par,
                                    threshold_f: c.pipeline.threshold_f,
                                    window_len_ms: c.pipeline.window_len_ms,
                                    window_slide_ms: c.pipeline.window_slide_ms,
                                    parse_in_passthrough: c.pipeline.parse_in_passthrough,
                                    time_domain: c.pipeline.time_domain,
                                },
                                duration_s: c.duration_s,
                                repetitions: c.repetitions,
                                resources: c.resources,
                                limits: c.limits,
                                metrics: c.metrics,
                                slurm: c.slurm.clone(),
                                drain_timeout_s: c.drain_timeout_s,
                                output_dir: c.output_dir.clone(),
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
experiment_name: scaling
workload:
  pattern: constant
  total_rate_eps: 100000
event_size_bytes: 27
broker:
  partitions: 4
pipeline:
  kind: pass_through
  parallelism: 4
duration_s: 10
"#;

    fn parse(extra: &str) -> ExperimentConfig {
        let mut v: serde_yaml::Value = serde_yaml::from_str(BASE).unwrap();
        let e: serde_yaml::Value = serde_yaml::from_str(extra).unwrap();
        merge(&mut v, e);
        serde_yaml::from_value(v).unwrap()
    }

    fn merge(a: &mut serde_yaml::Value, b: serde_yaml::Value) {
        match (a, b) {
            (serde_yaml::Value::Mapping(a), serde_yaml::Value::Mapping(b)) => {
                for (k, v) in b {
                    match a.get_mut(&k) {
                        Some(slot) if slot.is_mapping() && v.is_mapping() => merge(slot, v),
                        _ => {
                            a.insert(k, v);
                        }
                    }
                }
            }
            (a, b) => *a = b,
        }
    }

    fn paths(err: ConfigError) -> Vec<String> {
        err.violations().iter().map(|v| v.path.clone()).collect()
    }

    #[test]
    fn minimal_is_valid_with_defaults() {
        let c = validate_config(parse("{}")).unwrap();
        assert_eq!(c.repetitions, 1);
        assert_eq!(c.broker.partition_capacity, DEFAULT_PARTITION_CAPACITY);
        assert_eq!(c.pipeline.threshold_f, 122.0);
        assert_eq!(
            (c.pipeline.window_len_ms, c.pipeline.window_slide_ms),
            (5000, 1000)
        );
        assert_eq!(c.metrics.snapshot_interval_ms, 1000);
        assert_eq!(c.drain_timeout_s, 30);
    }

    #[test]
    fn slide_longer_than_window() {
        let err = validate_config(parse(
            "pipeline: {window_len_ms: 1000, window_slide_ms: 2000}",
        ))
        .unwrap_err();
        assert_eq!(paths(err), vec!["pipeline.window_slide_ms"]);
    }

    #[test]
    fn zero_repetitions() {
        let err = validate_config(parse("repetitions: 0")).unwrap_err();
        assert_eq!(paths(err), vec!["repetitions"]);
    }

    #[test]
    fn collects_every_violation() {
        let err = validate_config(parse(
            r#"
event_size_bytes: 20
repetitions: 0
broker: {partitions: 0}
pipeline: {parallelism: 0, window_len_ms: 1000, window_slide_ms: 300}
workload:
  pattern: random
  random: {min_pause_ms: 10, max_pause_ms: 5, min_freq_eps: 10, max_freq_eps: 20}
"#,
        ))
        .unwrap_err();
        let got = paths(err);
        for want in [
            "event_size_bytes",
            "repetitions",
            "broker.partitions",
            "pipeline.parallelism",
            "pipeline.window_slide_ms",
            "workload.random.min_pause_ms",
        ] {
            assert!(got.iter().any(|g| g == want), "missing {want} in {got:?}");
        }
    }

    #[test]
    fn missing_pattern_bounds() {
        let err = validate_config(parse("workload: {pattern: burst}")).unwrap_err();
        assert_eq!(paths(err), vec!["workload.burst"]);
        let err = validate_config(parse(
            "workload: [{pattern: constant, total_rate_eps: 5}, {pattern: random, total_rate_eps: 0}]",
        ))
        .unwrap_err();
        assert_eq!(
            paths(err),
            vec!["workload[1].total_rate_eps", "workload[1].random"]
        );
    }

    #[test]
    fn effective_minimum_reported() {
        let err = validate_config(parse("workload: {num_sensors: 1000}")).unwrap_err();
        let v = &err.violations()[0];
        assert_eq!(v.path, "event_size_bytes");
        assert!(v.message.contains("at least 28 bytes"), "{}", v.message);
    }

    #[test]
    fn unknown_keys_rejected() {
        let text = format!("{BASE}bogus: 1\n");
        assert!(matches!(
            ExperimentConfig::from_yaml(&text),
            Err(ConfigError::Parse(_))
        ));
        let text = BASE.replace("partitions: 4", "partitions: 4\n  replicas: 3");
        assert!(ExperimentConfig::from_yaml(&text).is_err());
    }

    #[test]
    fn two_by_two() {
        let c = validate_config(parse(
            "workload: {total_rate_eps: [500000, 8000000]}\npipeline: {parallelism: [1, 16]}",
        ))
        .unwrap();
        let runs = expand_experiment_matrix(&c).unwrap();
        assert_eq!(runs.len(), 4);
        assert_eq!(
            runs[0].run_id,
            "pattern-constant_rate-500000_size-27_pipeline-pass-through_par-1_rep1"
        );
        assert_eq!(runs[3].pipeline.parallelism, 16);
        assert_eq!(runs[3].workload.total_rate_eps, 8_000_000);
    }

    #[test]
    fn repetitions_differ_only_in_index() {
        let c = validate_config(parse("repetitions: 3")).unwrap();
        let runs = expand_experiment_matrix(&c).unwrap();
        assert_eq!(runs.len(), 3);
        let ids: Vec<&str> = runs.iter().map(|r| r.run_id.as_str()).collect();
        for (i, id) in ids.iter().enumerate() {
            assert!(id.ends_with(&format!("_rep{}", i + 1)));
            assert_eq!(
                id.rsplit_once('_').unwrap().0,
                ids[0].rsplit_once('_').unwrap().0
            );
        }
        assert_eq!(runs[0].parameters, runs[2].parameters);
        assert_ne!(runs[0].seed, runs[1].seed);
    }

    #[test]
    fn thirty_runs_deterministic() {
        let c = validate_config(parse(
            "workload: {total_rate_eps: [1000, 2000, 3000]}\npipeline: {parallelism: [1, 2, 4, 8, 16]}\nrepetitions: 2",
        ))
        .unwrap();
        let a = expand_experiment_matrix(&c).unwrap();
        let b = expand_experiment_matrix(&c).unwrap();
        assert_eq!(a.len(), 30);
        assert_eq!(a, b);
        let ids: std::collections::HashSet<_> = a.iter().map(|r| &r.run_id).collect();
        assert_eq!(ids.len(), 30);
        assert_eq!(a[0].content_hash(), b[0].content_hash());
        assert_ne!(a[0].content_hash(), a[1].content_hash());
    }

    #[test]
    fn matrix_cap() {
        let c = validate_config(parse("repetitions: 11\nmax_runs: 10")).unwrap();
        assert!(matches!(
            expand_experiment_matrix(&c),
            Err(ConfigError::MatrixTooLarge { runs: 11, cap: 10 })
        ));
    }

    #[test]
    fn multiple_workloads_get_distinct_ids() {
        let c = validate_config(parse(
            "workload: [{pattern: constant, total_rate_eps: 10}, {pattern: constant, total_rate_eps: 10, num_sensors: 4}]",
        ))
        .unwrap();
        let runs = expand_experiment_matrix(&c).unwrap();
        assert_eq!(runs.len(), 2);
        assert!(runs[0].run_id.starts_with("workload-0_"));
        assert!(runs[1].run_id.starts_with("workload-1_"));
    }
}
