//! Trace data model: events, their payload-free signatures, and sessions.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt;

/// Milliseconds since an arbitrary epoch (virtual or wall clock).
pub type Millis = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    ToolCall,
    LlmStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Success,
    Fail,
}

impl Status {
    pub fn is_success(self) -> bool {
        matches!(self, Status::Success)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Success => f.write_str("success"),
            Status::Fail => f.write_str("fail"),
        }
    }
}

/// One tool invocation or LLM step inside a session.
///
/// The serialized form is the JSONL trace record; field names follow the
/// on-disk schema (`tool`, `t_start_ms`, `t_end_ms`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub session_id: String,
    pub seq: u64,
    pub kind: EventKind,
    #[serde(rename = "tool", default)]
    pub tool_type: String,
    pub status: Status,
    #[serde(default)]
    pub args: Value,
    #[serde(default)]
    pub result: Value,
    #[serde(rename = "t_start_ms")]
    pub t_start: Millis,
    #[serde(rename = "t_end_ms")]
    pub t_end: Millis,
}

impl Event {
    #[allow(clippy::too_many_arguments)]
    pub fn tool_call(
        session_id: impl Into<String>,
        seq: u64,
        tool_type: impl Into<String>,
        status: Status,
        args: Value,
        result: Value,
        t_start: Millis,
        t_end: Millis,
    ) -> Self {
        Self {
            session_id: session_id.into(),
            seq,
            kind: EventKind::ToolCall,
            tool_type: tool_type.into(),
            status,
            args,
            result,
            t_start,
            t_end,
        }
    }

    pub fn llm_step(session_id: impl Into<String>, seq: u64, t_start: Millis, t_end: Millis) -> Self {
        Self {
            session_id: session_id.into(),
            seq,
            kind: EventKind::LlmStep,
            tool_type: String::new(),
            status: Status::Success,
            args: Value::Null,
            result: Value::Null,
            t_start,
            t_end,
        }
    }

    pub fn is_tool_call(&self) -> bool {
        self.kind == EventKind::ToolCall
    }

    /// Signature for tool calls, `None` for LLM steps.
    pub fn signature(&self) -> Option<EventSignature> {
        signature_of(self).ok()
    }
}

/// Payload-free descriptor of a tool call: equality is `(tool_type, status)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EventSignature {
    #[serde(rename = "tool")]
    pub tool_type: String,
    pub status: Status,
}

impl EventSignature {
    pub fn new(tool_type: impl Into<String>, status: Status) -> Self {
        Self {
            tool_type: tool_type.into(),
            status,
        }
    }

    pub fn success(tool_type: impl Into<String>) -> Self {
        Self::new(tool_type, Status::Success)
    }

    pub fn fail(tool_type: impl Into<String>) -> Self {
        Self::new(tool_type, Status::Fail)
    }
}

impl fmt::Display for EventSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.tool_type, self.status)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SignatureError {
    #[error("LLM step {session_id}#{seq} has no tool signature")]
    LlmStep { session_id: String, seq: u64 },
}

/// Projects a tool call onto its signature. Never reads `args` or `result`.
pub fn signature_of(e: &Event) -> Result<EventSignature, SignatureError> {
    match e.kind {
        EventKind::ToolCall => Ok(EventSignature {
            tool_type: e.tool_type.clone(),
            status: e.status,
        }),
        EventKind::LlmStep => Err(SignatureError::LlmStep {
            session_id: e.session_id.clone(),
            seq: e.seq,
        }),
    }
}

/// Ordered events of one agent session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub events: Vec<Event>,
}

impl Session {
    pub fn new(session_id: impl Into<String>, events: Vec<Event>) -> Self {
        Self {
            session_id: session_id.into(),
            events,
        }
    }

    pub fn tool_calls(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| e.is_tool_call())
    }

    /// Signatures of the tool calls, in order.
    pub fn signatures(&self) -> Vec<EventSignature> {
        self.tool_calls().filter_map(Event::signature).collect()
    }
}
