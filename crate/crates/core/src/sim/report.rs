//! Run reports, aggregate statistics, and run comparison.

use super::Mode;
use crate::event::Millis;
use crate::scheduler::AuditReport;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestReport {
    pub request: usize,
    pub script_id: String,
    pub session: String,
    pub arrival_ms: Millis,
    pub finish_ms: Millis,
    pub e2e_ms: Millis,
    pub think_ms: Millis,
    /// Execution time of the runs that served this request's calls.
    pub tool_exec_ms: Millis,
    /// Time blocked waiting for tool results.
    pub tool_stall_ms: Millis,
    /// Think time overlapped by speculative or promoted runs that served a call.
    pub overlap_ms: Millis,
    /// Resource-time of this session's speculative runs that served nothing.
    pub spec_overhead_ms: Millis,
    pub calls: usize,
    pub cache_hits: usize,
    pub promotions: usize,
    /// Digest of every (tool, status, result) the agent observed.
    pub results_digest: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p50: percentile(&v, 50.0),
            p95: percentile(&v, 95.0),
            p99: percentile(&v, 99.0),
            max: *v.last().expect("non-empty"),
        }
    }
}

/// Nearest-rank percentile of sorted values.
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((q / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Aggregates {
    pub e2e_ms: Stat,
    pub tool_stall_ms: Stat,
    pub tool_exec_ms: Stat,
    pub overlap_ms: Stat,
    pub spec_overhead_ms: Stat,
    pub makespan_ms: Millis,
    /// Requests per second of virtual time.
    pub throughput_rps: f64,
    /// Authoritative tool calls completed per second of virtual time.
    pub tool_throughput: f64,
    /// Share of capacity-time held by authoritative executions.
    pub auth_utilization: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionStats {
    pub steps: usize,
    pub top1: f64,
    pub top3: f64,
    pub hit_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub workload_id: String,
    pub seed: u64,
    pub mode: Mode,
    pub requests: Vec<RequestReport>,
    pub aggregates: Aggregates,
    pub prediction: PredictionStats,
    pub audit: AuditReport,
    /// Speculative runs of side-effecting tools that executed at full depth.
    pub side_effect_commits: u64,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn mean_stall(&self) -> f64 {
        self.aggregates.tool_stall_ms.mean
    }

    /// `mode,e2e_ms,cdf` rows.
    pub fn latency_cdf_csv(&self) -> String {
        let mut v: Vec<Millis> = self.requests.iter().map(|r| r.e2e_ms).collect();
        v.sort_unstable();
        let mut out = String::from("mode,e2e_ms,cdf\n");
        let n = v.len() as f64;
        for (i, x) in v.iter().enumerate() {
            let _ = writeln!(out, "{},{x},{:.6}", self.mode.as_str(), (i + 1) as f64 / n);
        }
        out
    }

    /// Per-request latency breakdown rows.
    pub fn breakdown_csv(&self) -> String {
        let mut out = String::from("request,think_ms,tool_stall_ms,tool_exec_ms,overlap_ms,spec_overhead_ms,e2e_ms\n");
        for r in &self.requests {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.request, r.think_ms, r.tool_stall_ms, r.tool_exec_ms, r.overlap_ms, r.spec_overhead_ms, r.e2e_ms
            );
        }
        out
    }
}

pub(crate) fn aggregate(requests: &[RequestReport], makespan: Millis, auth_busy: f64, capacity: u32, calls: usize) -> Aggregates {
    let col = |f: fn(&RequestReport) -> Millis| -> Vec<f64> { requests.iter().map(|r| f(r) as f64).collect() };
    let secs = (makespan as f64 / 1_000.0).max(1e-9);
    Aggregates {
        e2e_ms: Stat::of(&col(|r| r.e2e_ms)),
        tool_stall_ms: Stat::of(&col(|r| r.tool_stall_ms)),
        tool_exec_ms: Stat::of(&col(|r| r.tool_exec_ms)),
        overlap_ms: Stat::of(&col(|r| r.overlap_ms)),
        spec_overhead_ms: Stat::of(&col(|r| r.spec_overhead_ms)),
        makespan_ms: makespan,
        throughput_rps: requests.len() as f64 / secs,
        tool_throughput: calls as f64 / secs,
        auth_utilization: if makespan == 0 || capacity == 0 {
            0.0
        } else {
            auth_busy / (makespan as f64 * capacity as f64)
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestDelta {
    pub request: usize,
    pub baseline_e2e_ms: Millis,
    pub other_e2e_ms: Millis,
    pub speedup: f64,
    pub results_match: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub workload_id: String,
    pub seed: u64,
    pub requests: Vec<RequestDelta>,
    pub mean_speedup: f64,
    /// Share of requests with speedup at least 1.
    pub share_not_slower: f64,
    /// Relative reduction of mean tool stall.
    pub stall_reduction: f64,
    /// Relative reduction of mean end-to-end latency.
    pub e2e_reduction: f64,
    pub results_identical: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CompareError {
    #[error("workload ids differ: {0} vs {1}")]
    Workload(String, String),
    #[error("seeds differ: {0} vs {1}")]
    Seed(u64, u64),
    #[error("request sets differ")]
    Requests,
}

/// Compares `other` against `baseline` request by request.
pub fn compare_runs(baseline: &RunReport, other: &RunReport) -> Result<Comparison, CompareError> {
    if baseline.workload_id != other.workload_id {
        return Err(CompareError::Workload(baseline.workload_id.clone(), other.workload_id.clone()));
    }
    if baseline.seed != other.seed {
        return Err(CompareError::Seed(baseline.seed, other.seed));
    }
    if baseline.requests.len() != other.requests.len()
        || baseline.requests.iter().zip(&other.requests).any(|(a, b)| a.request != b.request)
    {
        return Err(CompareError::Requests);
    }
    let requests: Vec<RequestDelta> = baseline
        .requests
        .iter()
        .zip(&other.requests)
        .map(|(a, b)| RequestDelta {
            request: a.request,
            baseline_e2e_ms: a.e2e_ms,
            other_e2e_ms: b.e2e_ms,
            speedup: speedup(a.e2e_ms, b.e2e_ms),
            results_match: a.results_digest == b.results_digest,
        })
        .collect();
    let n = requests.len().max(1) as f64;
    let rel = |a: f64, b: f64| if a > 0.0 { (a - b) / a } else { 0.0 };
    Ok(Comparison {
        workload_id: baseline.workload_id.clone(),
        seed: baseline.seed,
        mean_speedup: requests.iter().map(|r| r.speedup).sum::<f64>() / n,
        share_not_slower: requests.iter().filter(|r| r.speedup >= 1.0).count() as f64 / n,
        stall_reduction: rel(baseline.mean_stall(), other.mean_stall()),
        e2e_reduction: rel(baseline.aggregates.e2e_ms.mean, other.aggregates.e2e_ms.mean),
        results_identical: requests.iter().all(|r| r.results_match),
        requests,
    })
}

pub fn speedup(baseline: Millis, other: Millis) -> f64 {
    match (baseline, other) {
        (0, 0) => 1.0,
        (_, 0) => f64::INFINITY,
        (b, o) => b as f64 / o as f64,
    }
}

impl Comparison {
    /// `speedup,cdf` rows.
    pub fn speedup_cdf_csv(&self) -> String {
        let mut v: Vec<f64> = self.requests.iter().map(|r| r.speedup).collect();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mut out = String::from("speedup,cdf\n");
        for (i, s) in v.iter().enumerate() {
            let _ = writeln!(out, "{s:.6},{:.6}", (i + 1) as f64 / n);
        }
        out
    }
}
