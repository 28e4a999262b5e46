use std::io::IsTerminal;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    Local,
    SlurmInteractive,
    SlurmBatch,
}

impl ExecutionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExecutionMode::Local => "local",
            ExecutionMode::SlurmInteractive => "slurm_interactive",
            ExecutionMode::SlurmBatch => "slurm_batch",
        }
    }
}

/// What the environment grants. Unknown values stay `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectedResources {
    pub cpus: Option<u32>,
    pub mem_gb: Option<u32>,
    pub nodes: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionEnvironment {
    pub mode: ExecutionMode,
    pub job_id: Option<String>,
    pub resources: DetectedResources,
}

pub fn detect_environment() -> ExecutionEnvironment {
    let mut env = detect_from(|k| std::env::var(k).ok(), std::io::stdin().is_terminal());
    if env.mode == ExecutionMode::Local {
        env.resources = DetectedResources {
            cpus: std::thread::available_parallelism()
                .ok()
                .map(|n| n.get() as u32),
            mem_gb: local_mem_gb(),
            nodes: Some(1),
        };
    }
    env
}

/// Detection against an arbitrary variable lookup, for testing.
pub fn detect_from(var: impl Fn(&str) -> Option<String>, tty: bool) -> ExecutionEnvironment {
    let num = |k: &str| var(k).and_then(|v| v.trim().parse::<u64>().ok());
    match var("SLURM_JOB_ID").filter(|v| !v.is_empty()) {
        None => ExecutionEnvironment {
            mode: ExecutionMode::Local,
            job_id: None,
            resources: DetectedResources::default(),
        },
        Some(job_id) => ExecutionEnvironment {
            mode: if tty {
                ExecutionMode::SlurmInteractive
            } else {
                ExecutionMode::SlurmBatch
            },
            job_id: Some(job_id),
            resources: DetectedResources {
                cpus: num("SLURM_CPUS_PER_TASK").map(|v| v as u32),
                // SLURM reports memory in MB
                mem_gb: num("SLURM_MEM_PER_NODE").map(|mb| (mb / 1024) as u32),
                nodes: num("SLURM_JOB_NUM_NODES").map(|v| v as u32),
            },
        },
    }
}

fn local_mem_gb() -> Option<u32> {
    let text = std::fs::read_to_string("/proc/meminfo").ok()?;
    let kb: u64 = text
        .lines()
        .find_map(|l| l.strip_prefix("MemTotal:"))?
        .trim()
        .trim_end_matches("kB")
        .trim()
        .parse()
        .ok()?;
    Some((kb / (1024 * 1024)) as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn vars(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let m: HashMap<String, String> = pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        move |k| m.get(k).cloned()
    }

    #[test]
    fn local_without_slurm() {
        let e = detect_from(vars(&[]), true);
        assert_eq!(e.mode, ExecutionMode::Local);
        assert_eq!(e.job_id, None);
    }

    #[test]
    fn batch_without_tty() {
        let e = detect_from(
            vars(&[
                ("SLURM_JOB_ID", "4711"),
                ("SLURM_CPUS_PER_TASK", "16"),
                ("SLURM_MEM_PER_NODE", "204800"),
                ("SLURM_JOB_NUM_NODES", "1"),
            ]),
            false,
        );
        assert_eq!(e.mode, ExecutionMode::SlurmBatch);
        assert_eq!(e.job_id.as_deref(), Some("4711"));
        assert_eq!(
            e.resources,
            DetectedResources {
                cpus: Some(16),
                mem_gb: Some(200),
                nodes: Some(1)
            }
        );
    }

    #[test]
    fn interactive_with_tty() {
        let e = detect_from(vars(&[("SLURM_JOB_ID", "1")]), true);
        assert_eq!(e.mode, ExecutionMode::SlurmInteractive);
        assert_eq!(e.resources, DetectedResources::default());
    }
}
