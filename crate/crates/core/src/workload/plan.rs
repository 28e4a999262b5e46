use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("invalid rate: total {total} eps with per-instance cap {cap} eps (both must be >= 1)")]
    InvalidRate { total: u64, cap: u64 },
}

/// How an aggregate rate is split over generator instances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorPlan {
    pub instance_count: usize,
    /// Even share before the remainder is handed out.
    pub per_instance_rate_eps: u64,
    /// Actual rate of each instance; the first `total % instance_count`
    /// instances carry one extra event per second.
    pub instance_rates_eps: Vec<u64>,
    pub seed_base: u64,
}

impl GeneratorPlan {
    pub fn total_rate_eps(&self) -> u64 {
        self.instance_rates_eps.iter().sum()
    }

    pub fn with_seed(mut self, seed_base: u64) -> Self {
        self.seed_base = seed_base;
        self
    }
}

/// Shards `total_rate_eps` over `ceil(total / cap)` instances.
pub fn plan_generators(
    total_rate_eps: u64,
    per_instance_cap_eps: u64,
) -> Result<GeneratorPlan, PlanError> {
    if total_rate_eps < 1 || per_instance_cap_eps < 1 {
        return Err(PlanError::InvalidRate {
            total: total_rate_eps,
            cap: per_instance_cap_eps,
        });
    }
    let n = total_rate_eps.div_ceil(per_instance_cap_eps);
    let base = total_rate_eps / n;
    let remainder = total_rate_eps % n;
    let instance_rates_eps = (0..n).map(|i| base + u64::from(i < remainder)).collect();
    Ok(GeneratorPlan {
        instance_count: n as usize,
        per_instance_rate_eps: base,
        instance_rates_eps,
        seed_base: 0,
    })
}
