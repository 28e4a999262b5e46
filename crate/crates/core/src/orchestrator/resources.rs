use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ExecutionEnvironment, ExecutionMode, OrchestratorError};
use crate::config::RunConfig;
use crate::workload::plan_generators;

/// Memory budget per generator instance.
pub const GENERATOR_MEM_GB: u32 = 2;
/// Memory budget of the broker.
pub const BROKER_MEM_GB: u32 = 5;
/// Broker plus control thread.
pub const OVERHEAD_CPUS: u32 = 2;
const WALLTIME_FACTOR: f64 = 1.5;
const WALLTIME_SLACK_S: u64 = 600;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceRequest {
    pub nodes: u32,
    pub cpus_per_task: u32,
    pub mem_gb: u32,
    #[serde(with = "secs")]
    pub walltime: Duration,
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_secs())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_secs)
    }
}

impl ResourceRequest {
    /// `HH:MM:SS`, hours unbounded.
    pub fn walltime_hms(&self) -> String {
        let s = self.walltime.as_secs();
        format!("{:02}:{:02}:{:02}", s / 3600, s / 60 % 60, s % 60)
    }
}

/// Generator instances the run will start.
pub fn generator_count(run: &RunConfig) -> u32 {
    plan_generators(
        run.workload.peak_rate_eps(),
        run.workload.per_instance_cap_eps,
    )
    .map_or(1, |p| p.instance_count as u32)
}

/// Minimum allocation for `run`, raised to any explicitly configured
/// values and checked against the cluster limits.
pub fn compute_resources(run: &RunConfig) -> Result<ResourceRequest, OrchestratorError> {
    let generators = generator_count(run);
    let cpus = generators + run.pipeline.parallelism as u32 + OVERHEAD_CPUS;
    let mem = generators * GENERATOR_MEM_GB + BROKER_MEM_GB + run.resources.engine_mem_gb;
    let wall_s = (run.duration_s as f64 * f64::from(run.repetitions) * WALLTIME_FACTOR).ceil()
        as u64
        + WALLTIME_SLACK_S;
    let req = ResourceRequest {
        nodes: run.resources.nodes,
        cpus_per_task: run.resources.cpus.map_or(cpus, |c| c.max(cpus)),
        mem_gb: run.resources.mem_gb.map_or(mem, |m| m.max(mem)),
        walltime: Duration::from_secs(wall_s),
    };

    let mut over = Vec::new();
    let limits = &run.limits;
    let mut check = |what: &str, have: u32, cap: Option<u32>, unit: &str| {
        if let Some(cap) = cap.filter(|&c| have > c) {
            over.push(format!("{what} {have}{unit} > limit {cap}{unit}"));
        }
    };
    check("cpus", req.cpus_per_task, limits.max_cpus, "");
    check("mem", req.mem_gb, limits.max_mem_gb, " GB");
    check("nodes", req.nodes, limits.max_nodes, "");
    if over.is_empty() {
        Ok(req)
    } else {
        Err(OrchestratorError::ResourceOverCap(over))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shortfall {
    pub resource: &'static str,
    pub allocated: u32,
    pub required: u32,
}

impl fmt::Display for Shortfall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: allocated {}, required {}",
            self.resource, self.allocated, self.required
        )
    }
}

/// In an interactive allocation, refuses to start when the job is smaller
/// than the request. Other modes pass unchecked.
pub fn interactive_guard(
    req: &ResourceRequest,
    env: &ExecutionEnvironment,
) -> Result<(), OrchestratorError> {
    if env.mode != ExecutionMode::SlurmInteractive {
        return Ok(());
    }
    let r = &env.resources;
    let short: Vec<Shortfall> = [
        ("cpus", r.cpus, req.cpus_per_task),
        ("mem_gb", r.mem_gb, req.mem_gb),
        ("nodes", r.nodes, req.nodes),
    ]
    .into_iter()
    .filter_map(|(resource, allocated, required)| {
        allocated
            .filter(|&a| a < required)
            .map(|allocated| Shortfall {
                resource,
                allocated,
                required,
            })
    })
    .collect();
    if short.is_empty() {
        Ok(())
    } else {
        Err(OrchestratorError::InsufficientAllocation(short))
    }
}
