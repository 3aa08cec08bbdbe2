//! Synthetic trace corpora with ground truth.

use super::motif::{MotifMix, Planted};
use super::script::{AgentScript, CallRecord, Replay};
use super::tools::ToolModel;
use crate::event::{Event, Millis, Session};
use std::collections::{BTreeMap, HashMap};

/// Ground truth for one tool-call event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTruth {
    pub step: usize,
    pub label: Option<String>,
    pub next_tool: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub sessions: Vec<Session>,
    /// Per session, aligned with its tool calls.
    pub truth: Vec<Vec<EventTruth>>,
    pub planted: Vec<Planted>,
}

/// Executes one script in isolation (no contention), returning its events
/// (LLM think steps included) and per-call truth.
pub fn realize(
    script: &AgentScript,
    tools: &HashMap<String, ToolModel>,
    seed: u64,
    session: &str,
    start: Millis,
) -> (Vec<Event>, Vec<EventTruth>) {
    let replay = Replay { seed, instance: session };
    let mut history: Vec<Option<CallRecord>> = vec![None; script.steps.len()];
    let mut revisions: BTreeMap<String, u64> = BTreeMap::new();
    let mut events = Vec::new();
    let mut truth: Vec<EventTruth> = Vec::new();
    let (mut t, mut seq) = (start, 0u64);
    let mut next = replay.next_step(script, 0, &history);
    while let Some(i) = next {
        let step = &script.steps[i];
        events.push(Event::llm_step(session, seq, t, t + step.think_ms));
        seq += 1;
        t += step.think_ms;
        let args = replay.resolve_args(script, i, &history);
        let model = &tools[&step.tool];
        let rev = revisions.entry(step.tool.clone()).or_insert(0);
        let (status, result) = model.outcome(seed, &args, *rev);
        if model.side_effecting {
            *rev += 1;
        }
        let d = model.full_ms(seed, &args);
        events.push(Event::tool_call(session, seq, &step.tool, status, args.clone(), result.clone(), t, t + d));
        seq += 1;
        t += d;
        if let Some(prev) = truth.last_mut() {
            prev.next_tool = Some(step.tool.clone());
        }
        truth.push(EventTruth {
            step: i,
            label: step.label.clone(),
            next_tool: None,
        });
        history[i] = Some(CallRecord {
            tool: step.tool.clone(),
            args,
            status,
            result,
        });
        next = replay.next_step(script, i + 1, &history);
    }
    if script.final_think_ms > 0 {
        events.push(Event::llm_step(session, seq, t, t + script.final_think_ms));
    }
    (events, truth)
}

/// `n_sessions` sessions, each replaying a fresh script drawn from `mix`.
pub fn generate_corpus(mix: &MotifMix, tools: &[ToolModel], n_sessions: usize, seed: u64) -> Corpus {
    let by_name: HashMap<String, ToolModel> = tools.iter().map(|t| (t.tool.clone(), t.clone())).collect();
    let mut sessions = Vec::with_capacity(n_sessions);
    let mut truth = Vec::with_capacity(n_sessions);
    for i in 0..n_sessions {
        let id = format!("sess-{i:05}");
        let script = mix.expand(&id, seed);
        let (events, t) = realize(&script, &by_name, seed, &id, 0);
        sessions.push(Session::new(id, events));
        truth.push(t);
    }
    let mut planted: Vec<Planted> = Vec::new();
    for m in &mix.motifs {
        for p in m.motif.planted() {
            if !planted.iter().any(|q| q.label == p.label) {
                planted.push(p);
            }
        }
    }
    Corpus {
        sessions,
        truth,
        planted,
    }
}
