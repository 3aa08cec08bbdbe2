//! JSONL trace ingestion and inactivity-based session segmentation.

use crate::event::{Event, EventKind, Millis, Session};
use std::collections::{BTreeMap, HashSet};
use std::io::BufRead;

pub const DEFAULT_INACTIVITY_THRESHOLD_MS: Millis = 300_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestConfig {
    /// Gaps strictly longer than this start a new session.
    pub inactivity_threshold_ms: Millis,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            inactivity_threshold_ms: DEFAULT_INACTIVITY_THRESHOLD_MS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    /// 1-based line number in the input stream.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct IngestReport {
    pub sessions: Vec<Session>,
    pub errors: Vec<LineError>,
    /// Claimed sessions whose records arrived out of timestamp order and were reordered.
    pub reordered: Vec<String>,
}

impl IngestReport {
    pub fn event_count(&self) -> usize {
        self.sessions.iter().map(|s| s.events.len()).sum()
    }
}

/// Parses one trace record, enforcing the per-event invariants.
pub fn parse_record(line: &str) -> Result<Event, String> {
    let e: Event = serde_json::from_str(line).map_err(|err| err.to_string())?;
    if e.t_start > e.t_end {
        return Err(format!("t_start_ms {} > t_end_ms {}", e.t_start, e.t_end));
    }
    if e.kind == EventKind::ToolCall && e.tool_type.is_empty() {
        return Err("tool_call record with empty tool".to_string());
    }
    Ok(e)
}

/// Reads a JSONL trace and groups it into sessions.
///
/// Malformed lines are tallied in [`IngestReport::errors`] and skipped.
pub fn ingest_trace<R: BufRead>(reader: R, cfg: &IngestConfig) -> std::io::Result<IngestReport> {
    let mut report = IngestReport::default();
    let mut claimed: BTreeMap<String, Vec<Event>> = BTreeMap::new();
    let mut seen: HashSet<(String, u64)> = HashSet::new();
    let mut reordered: HashSet<String> = HashSet::new();

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let event = match parse_record(&line) {
            Ok(e) => e,
            Err(message) => {
                report.errors.push(LineError { line: line_no, message });
                continue;
            }
        };
        if !seen.insert((event.session_id.clone(), event.seq)) {
            report.errors.push(LineError {
                line: line_no,
                message: format!("duplicate seq {} in session {}", event.seq, event.session_id),
            });
            continue;
        }
        let bucket = claimed.entry(event.session_id.clone()).or_default();
        if let Some(last) = bucket.last() {
            if (event.t_start, event.seq) < (last.t_start, last.seq) {
                reordered.insert(event.session_id.clone());
            }
        }
        bucket.push(event);
    }

    for (id, mut events) in claimed {
        events.sort_by_key(|e| (e.t_start, e.seq));
        report.sessions.extend(segment(&id, events, cfg.inactivity_threshold_ms));
    }
    report
        .sessions
        .sort_by(|a, b| (a.events[0].t_start, &a.session_id).cmp(&(b.events[0].t_start, &b.session_id)));
    let mut reordered: Vec<String> = reordered.into_iter().collect();
    reordered.sort();
    report.reordered = reordered;
    Ok(report)
}

/// Splits time-ordered events wherever the idle gap exceeds `threshold`.
/// The first segment keeps `id`; later ones are suffixed `#1`, `#2`, ...
fn segment(id: &str, events: Vec<Event>, threshold: Millis) -> Vec<Session> {
    let mut out: Vec<Session> = Vec::new();
    let mut current: Vec<Event> = Vec::new();
    let mut busy_until: Millis = 0;
    for mut e in events {
        if !current.is_empty() && e.t_start.saturating_sub(busy_until) > threshold {
            out.push(finish_segment(id, out.len(), std::mem::take(&mut current)));
        }
        if current.is_empty() {
            busy_until = e.t_end;
        } else {
            busy_until = busy_until.max(e.t_end);
        }
        e.session_id = segment_id(id, out.len());
        current.push(e);
    }
    if !current.is_empty() {
        out.push(finish_segment(id, out.len(), current));
    }
    out
}

fn segment_id(id: &str, n: usize) -> String {
    if n == 0 {
        id.to_string()
    } else {
        format!("{id}#{n}")
    }
}

fn finish_segment(id: &str, n: usize, events: Vec<Event>) -> Session {
    Session::new(segment_id(id, n), events)
}
