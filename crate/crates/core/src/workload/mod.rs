//! Synthetic workload generation: planning, scheduling and emission.

mod generator;
mod plan;
mod schedule;

pub use generator::{
    generate_event, generate_event_in, run_generator, EventSink, GeneratorError, GeneratorReport,
    GeneratorStats, RunOptions, SinkAck, SinkError,
};
pub use plan::{plan_generators, GeneratorPlan, PlanError};
pub use schedule::{emission_schedule, Schedule, Tick, ACTIVE_PHASE_MS};

use serde::{Deserialize, Serialize};

/// Default ceiling on the rate a single generator instance is asked to produce.
pub const DEFAULT_INSTANCE_CAP_EPS: u64 = 500_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Constant,
    Random,
    Burst,
}

impl Pattern {
    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::Constant => "constant",
            Pattern::Random => "random",
            Pattern::Burst => "burst",
        }
    }
}

/// Bounds for the random pattern: active phases at a uniformly drawn
/// frequency alternate with pauses of uniformly drawn length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomSpec {
    pub min_pause_ms: u64,
    pub max_pause_ms: u64,
    pub min_freq_eps: u64,
    pub max_freq_eps: u64,
}

/// A burst starts every `interval_ms` and emits at `burst_freq_eps` for
/// one active phase, then stays silent until the next boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurstSpec {
    pub interval_ms: u64,
    pub burst_freq_eps: u64,
}

impl BurstSpec {
    /// Length of the emitting part of each burst period.
    pub fn active_ms(&self) -> u64 {
        ACTIVE_PHASE_MS.min(self.interval_ms)
    }

    /// The random-pattern bounds this burst is a degenerate case of.
    pub fn as_random(&self) -> RandomSpec {
        let pause = self.interval_ms - self.active_ms();
        RandomSpec {
            min_pause_ms: pause,
            max_pause_ms: pause,
            min_freq_eps: self.burst_freq_eps,
            max_freq_eps: self.burst_freq_eps,
        }
    }
}

/// One fully resolved workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub pattern: Pattern,
    pub total_rate_eps: u64,
    #[serde(default = "default_cap")]
    pub per_instance_cap_eps: u64,
    #[serde(default = "default_num_sensors")]
    pub num_sensors: u64,
    #[serde(default)]
    pub min_temp_c: f64,
    #[serde(default = "default_max_temp")]
    pub max_temp_c: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<RandomSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burst: Option<BurstSpec>,
}

pub(crate) fn default_cap() -> u64 {
    DEFAULT_INSTANCE_CAP_EPS
}

pub(crate) fn default_num_sensors() -> u64 {
    100
}

pub(crate) fn default_max_temp() -> f64 {
    100.0
}

impl WorkloadSpec {
    pub fn constant(total_rate_eps: u64) -> Self {
        Self {
            pattern: Pattern::Constant,
            total_rate_eps,
            per_instance_cap_eps: DEFAULT_INSTANCE_CAP_EPS,
            num_sensors: default_num_sensors(),
            min_temp_c: 0.0,
            max_temp_c: default_max_temp(),
            random: None,
            burst: None,
        }
    }

    /// The highest aggregate rate this workload asks for; instances are
    /// planned against it.
    pub fn peak_rate_eps(&self) -> u64 {
        let pattern_peak = match self.pattern {
            Pattern::Constant => 0,
            Pattern::Random => self.random.map_or(0, |r| r.max_freq_eps),
            Pattern::Burst => self.burst.map_or(0, |b| b.burst_freq_eps),
        };
        self.total_rate_eps.max(pattern_peak)
    }

    /// Violations as (key, message) pairs, keys relative to the workload.
    pub fn violations(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.total_rate_eps < 1 {
            out.push(("total_rate_eps", "must be at least 1".to_string()));
        }
        if self.per_instance_cap_eps < 1 {
            out.push(("per_instance_cap_eps", "must be at least 1".to_string()));
        }
        if self.num_sensors < 1 {
            out.push(("num_sensors", "must be at least 1".to_string()));
        }
        if !(self.min_temp_c.is_finite() && self.max_temp_c.is_finite()) {
            out.push((
                "max_temp_c",
                "temperature bounds must be finite".to_string(),
            ));
        } else if self.min_temp_c > self.max_temp_c {
            out.push(("min_temp_c", "must not exceed max_temp_c".to_string()));
        }
        match (self.pattern, self.random, self.burst) {
            (Pattern::Random, None, _) => {
                out.push(("random", "required for the random pattern".to_string()))
            }
            (Pattern::Random, Some(r), _) => {
                if r.min_pause_ms > r.max_pause_ms {
                    out.push((
                        "random.min_pause_ms",
                        "must not exceed max_pause_ms".to_string(),
                    ));
                }
                if r.min_freq_eps > r.max_freq_eps {
                    out.push((
                        "random.min_freq_eps",
                        "must not exceed max_freq_eps".to_string(),
                    ));
                }
            }
            (Pattern::Burst, _, None) => {
                out.push(("burst", "required for the burst pattern".to_string()))
            }
            (Pattern::Burst, _, Some(b)) => {
                if b.interval_ms < 1 {
                    out.push(("burst.interval_ms", "must be at least 1".to_string()));
                }
            }
            (Pattern::Constant, _, _) => {}
        }
        out
    }
}
