use crate::canonical::ArgHash;
use crate::event::Millis;
use crate::policy::{ExecMode, SpeculationLevel};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Authoritative,
    Speculative,
}

/// Job identifier; authoritative and speculative jobs are numbered
/// independently so authoritative ids do not depend on speculation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JobId {
    pub kind: JobKind,
    pub seq: u64,
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.kind {
            JobKind::Authoritative => 'A',
            JobKind::Speculative => 'S',
        };
        write!(f, "{tag}{}", self.seq)
    }
}

impl FromStr for JobId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s.chars().next() {
            Some('A') => JobKind::Authoritative,
            Some('S') => JobKind::Speculative,
            _ => return Err(format!("bad job id {s}")),
        };
        let seq = s[1..].parse().map_err(|_| format!("bad job id {s}"))?;
        Ok(JobId { kind, seq })
    }
}

impl Serialize for JobId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for JobId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Pending,
    Running,
    Completed,
    Aborted,
    /// Speculative job adopted by an authoritative request; still running.
    Promoted,
}

impl JobState {
    pub fn is_live(self) -> bool {
        matches!(self, JobState::Pending | JobState::Running | JobState::Promoted)
    }

    pub fn holds_resources(self) -> bool {
        matches!(self, JobState::Running | JobState::Promoted)
    }
}

/// Scheduling estimates of a speculative job.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpecEstimate {
    /// Consumption probability `p`.
    pub p: f64,
    /// Latency reduction if consumed (ms), `T`.
    pub benefit_ms: f64,
    /// Resource units held while running, `c`.
    pub cost: u32,
    /// Expected execution duration (ms), `d`.
    pub duration_ms: f64,
}

impl SpecEstimate {
    /// Priority score `U = p * T / (c * d)`.
    pub fn utility(&self) -> f64 {
        utility(self.p, self.benefit_ms, self.cost, self.duration_ms)
    }
}

pub fn utility(p: f64, benefit_ms: f64, cost: u32, duration_ms: f64) -> f64 {
    let denom = cost.max(1) as f64 * duration_ms.max(f64::MIN_POSITIVE);
    p * benefit_ms / denom
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub id: JobId,
    pub session: String,
    pub tool_type: String,
    pub args: Value,
    pub key: ArgHash,
    pub state: JobState,
    pub preemptible: bool,
    pub cost: u32,
    /// Execution depth; `Full` for authoritative jobs.
    pub mode: ExecMode,
    pub level: Option<SpeculationLevel>,
    /// 1.0 for authoritative jobs.
    pub p: f64,
    pub benefit_ms: f64,
    pub duration_ms: f64,
    pub no_commit: bool,
    pub submitted_at: Millis,
    pub started_at: Option<Millis>,
    pub finished_at: Option<Millis>,
    /// Speculative job whose result (or promotion) served an authoritative call.
    pub consumed: bool,
}

impl Job {
    pub fn kind(&self) -> JobKind {
        self.id.kind
    }

    pub fn utility(&self) -> f64 {
        utility(self.p, self.benefit_ms, self.cost, self.duration_ms)
    }

    pub fn is_promoted(&self) -> bool {
        self.state == JobState::Promoted
    }
}
