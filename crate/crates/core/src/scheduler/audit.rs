use serde::{Deserialize, Serialize};

/// Speculation tallies; `launched = consumed + aborted + expired + running`
/// where `running` counts unconsumed live executions.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AuditReport {
    pub submitted: u64,
    /// Rejected at submission: key already live or cached.
    pub duplicates: u64,
    /// Dropped before launch (newer predictions, authoritative arrival, or queue cap).
    pub superseded: u64,
    pub launched: u64,
    pub launched_full: u64,
    pub launched_dry_run: u64,
    pub launched_warm_up: u64,
    /// Launched with `no_commit`; prevented from committing effects.
    pub no_commit: u64,
    /// `no_commit` results handed to authoritative callers; zero by construction.
    pub committed_no_commit: u64,
    pub downgraded: u64,
    pub cache_hits: u64,
    pub promotions: u64,
    /// Warm-up or dry-run executions whose preparation was used.
    pub warm_used: u64,
    pub consumed: u64,
    pub aborted: u64,
    pub expired: u64,
    pub running: u64,
    pub failed: u64,
    /// Resource-time of aborted runs plus unconsumed completions (ms).
    pub wasted_ms: f64,
}

impl AuditReport {
    pub fn balanced(&self) -> bool {
        self.launched == self.consumed + self.aborted + self.expired + self.running
    }

    pub fn is_zero_speculation(&self) -> bool {
        self.submitted == 0 && self.launched == 0 && self.consumed == 0
    }
}
