//! Structured job-transition log.

use super::job::{JobId, JobKind, JobState};
use crate::event::Millis;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogLevel {
    Off,
    /// Authoritative transitions only.
    Auth,
    #[default]
    All,
}

impl FromStr for LogLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "off" | "0" | "none" => Ok(LogLevel::Off),
            "auth" | "authoritative" => Ok(LogLevel::Auth),
            "all" | "1" | "" => Ok(LogLevel::All),
            other => Err(format!("unknown log level {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: Millis,
    pub job_id: JobId,
    pub kind: JobKind,
    /// `None` on creation.
    pub state_from: Option<JobState>,
    pub state_to: JobState,
    pub reason: String,
    pub tool: String,
    pub session: String,
}

#[derive(Debug, Clone, Default)]
pub struct EventLog {
    level: LogLevel,
    records: Vec<LogRecord>,
}

impl EventLog {
    pub fn new(level: LogLevel) -> Self {
        Self {
            level,
            records: Vec::new(),
        }
    }

    pub fn level(&self) -> LogLevel {
        self.level
    }

    pub fn push(&mut self, rec: LogRecord) {
        let keep = match self.level {
            LogLevel::Off => false,
            LogLevel::Auth => rec.kind == JobKind::Authoritative,
            LogLevel::All => true,
        };
        if keep {
            self.records.push(rec);
        }
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// `(t, job, tool, session)` for every authoritative dispatch, in log order.
pub fn authoritative_dispatches(records: &[LogRecord]) -> Vec<(Millis, JobId, String, String)> {
    records
        .iter()
        .filter(|r| r.kind == JobKind::Authoritative && r.state_to == JobState::Running)
        .map(|r| (r.t, r.job_id, r.tool.clone(), r.session.clone()))
        .collect()
}
