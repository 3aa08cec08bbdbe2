//! Per-tool execution statistics feeding the `T`, `d`, and `c` estimates.

use crate::policy::SpeculationLevel;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub duration_ms: f64,
    /// Tool wait avoided by a consumed speculation (0 if none).
    pub stall_saved_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ToolStats {
    pub mean_duration_ms: f64,
    pub samples: u64,
    pub stall_saved_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimates {
    /// EWMA smoothing factor in (0, 1].
    pub alpha: f64,
    /// Fraction of the mean duration modelling warm-up cost and benefit.
    pub warm_fraction: f64,
    pub default_cost: u32,
    /// Duration assumed before the first observation.
    pub default_duration_ms: f64,
    pub costs: BTreeMap<String, u32>,
    /// Prior means used until a tool has been observed.
    pub priors: BTreeMap<String, f64>,
    stats: BTreeMap<String, ToolStats>,
}

impl Default for Estimates {
    fn default() -> Self {
        Self {
            alpha: 0.3,
            warm_fraction: 0.2,
            default_cost: 1,
            default_duration_ms: 1_000.0,
            costs: BTreeMap::new(),
            priors: BTreeMap::new(),
            stats: BTreeMap::new(),
        }
    }
}

impl Estimates {
    pub fn with_alpha(alpha: f64) -> Self {
        Self {
            alpha,
            ..Self::default()
        }
    }

    pub fn update_estimates(&mut self, tool: &str, obs: Observation) {
        let alpha = self.alpha;
        let s = self.stats.entry(tool.to_string()).or_default();
        s.mean_duration_ms = if s.samples == 0 {
            obs.duration_ms
        } else {
            alpha * obs.duration_ms + (1.0 - alpha) * s.mean_duration_ms
        };
        s.samples += 1;
        s.stall_saved_ms += obs.stall_saved_ms;
    }

    pub fn stats(&self, tool: &str) -> Option<&ToolStats> {
        self.stats.get(tool)
    }

    pub fn mean_duration(&self, tool: &str) -> f64 {
        match self.stats.get(tool) {
            Some(s) if s.samples > 0 => s.mean_duration_ms,
            _ => self.priors.get(tool).copied().unwrap_or(self.default_duration_ms),
        }
    }

    pub fn cost(&self, tool: &str) -> u32 {
        self.costs.get(tool).copied().unwrap_or(self.default_cost).max(1)
    }

    /// Expected execution time at a speculation depth.
    pub fn duration_at(&self, tool: &str, level: SpeculationLevel) -> f64 {
        let mean = self.mean_duration(tool);
        match level {
            SpeculationLevel::Full | SpeculationLevel::DryRun => mean,
            SpeculationLevel::WarmOnly => self.warm_fraction * mean,
        }
    }

    /// Latency saved if a speculation at `level` is consumed: a full run
    /// saves one execution, shallower levels only the initialization share.
    pub fn benefit_at(&self, tool: &str, level: SpeculationLevel) -> f64 {
        let mean = self.mean_duration(tool);
        match level {
            SpeculationLevel::Full => mean,
            SpeculationLevel::DryRun | SpeculationLevel::WarmOnly => self.warm_fraction * mean,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(ms: f64) -> Observation {
        Observation {
            duration_ms: ms,
            stall_saved_ms: 0.0,
        }
    }

    #[test]
    fn first_observation_sets_mean() {
        let mut e = Estimates::default();
        e.update_estimates("t", obs(1_000.0));
        assert_eq!(e.mean_duration("t"), 1_000.0);
    }

    #[test]
    fn ewma_half() {
        let mut e = Estimates::with_alpha(0.5);
        e.update_estimates("t", obs(1_000.0));
        e.update_estimates("t", obs(2_000.0));
        assert_eq!(e.mean_duration("t"), 1_500.0);
    }

    #[test]
    fn priors_until_observed() {
        let mut e = Estimates::default();
        e.priors.insert("t".into(), 700.0);
        assert_eq!(e.mean_duration("t"), 700.0);
        assert_eq!(e.mean_duration("u"), 1_000.0);
        assert_eq!(e.cost("u"), 1);
    }

    #[test]
    fn warm_levels_scale_by_fraction() {
        let mut e = Estimates::default();
        e.priors.insert("t".into(), 1_000.0);
        assert_eq!(e.duration_at("t", SpeculationLevel::WarmOnly), 200.0);
        assert_eq!(e.benefit_at("t", SpeculationLevel::Full), 1_000.0);
        assert_eq!(e.benefit_at("t", SpeculationLevel::DryRun), 200.0);
    }
}
