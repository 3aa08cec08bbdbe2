//! Runtime prediction: match pattern contexts against a bounded window of
//! recent events and emit probability-annotated predicted invocations.

use crate::canonical::canonical_eq;
use crate::event::{Event, EventSignature, Millis, Session};
use crate::mapping::evaluate;
use crate::matching::{match_context, MatchMode};
use crate::miner::PatternPool;
use crate::policy::{SpeculationLevel, SpeculationPolicy};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub const DEFAULT_WINDOW: usize = 16;

/// Most recent tool calls of one session, oldest first.
#[derive(Debug, Clone)]
pub struct PredictionWindow {
    events: VecDeque<Event>,
    capacity: usize,
}

impl PredictionWindow {
    pub fn new(capacity: usize) -> Self {
        let capacity = capacity.max(1);
        Self {
            events: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    /// Appends a tool call, evicting the oldest past capacity. LLM steps
    /// carry no signature and are not retained.
    pub fn observe(&mut self, e: Event) {
        if !e.is_tool_call() {
            return;
        }
        if self.events.len() == self.capacity {
            self.events.pop_front();
        }
        self.events.push_back(e);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.events.iter()
    }

    pub fn latest(&self) -> Option<&Event> {
        self.events.back()
    }
}

/// Argument completeness of a prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "args")]
pub enum PredictedArgs {
    Full(Value),
    Partial(Value),
    ToolOnly,
}

impl PredictedArgs {
    pub fn is_full(&self) -> bool {
        matches!(self, PredictedArgs::Full(_))
    }

    pub fn value(&self) -> Option<&Value> {
        match self {
            PredictedArgs::Full(v) | PredictedArgs::Partial(v) => Some(v),
            PredictedArgs::ToolOnly => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedInvocation {
    pub tool_type: String,
    pub args: PredictedArgs,
    pub probability: f64,
    /// Index of the producing pattern in the pool.
    pub source_pattern: usize,
    pub created_at: Millis,
}

/// Read-only pool indexed by each context's last signature.
#[derive(Debug)]
pub struct PatternIndex {
    pool: PatternPool,
    by_last: HashMap<EventSignature, Vec<usize>>,
    structural_errors: AtomicU64,
}

impl PatternIndex {
    pub fn new(pool: PatternPool) -> Self {
        let mut by_last: HashMap<EventSignature, Vec<usize>> = HashMap::new();
        for (i, p) in pool.patterns.iter().enumerate() {
            if let Some(last) = p.context.last() {
                by_last.entry(last.clone()).or_default().push(i);
            }
        }
        Self {
            pool,
            by_last,
            structural_errors: AtomicU64::new(0),
        }
    }

    pub fn pool(&self) -> &PatternPool {
        &self.pool
    }

    pub fn match_mode(&self) -> MatchMode {
        self.pool.config.match_mode
    }

    pub fn horizon(&self) -> usize {
        self.pool.config.k
    }

    /// Patterns skipped because their mapping failed structurally.
    pub fn structural_errors(&self) -> u64 {
        self.structural_errors.load(Ordering::Relaxed)
    }

    /// All matching patterns' predictions, `p` descending then pattern id.
    pub fn predict(&self, window: &PredictionWindow) -> Vec<PredictedInvocation> {
        let Some(latest) = window.latest() else { return Vec::new() };
        let Some(sig) = latest.signature() else { return Vec::new() };
        let Some(candidates) = self.by_last.get(&sig) else { return Vec::new() };
        let events: Vec<&Event> = window.events().collect();
        let mut out = Vec::new();
        for &id in candidates {
            let pattern = &self.pool.patterns[id];
            let Some(m) = match_context(&pattern.context, &events, self.match_mode(), self.horizon()) else {
                continue;
            };
            let args = match &pattern.mapping {
                None => PredictedArgs::ToolOnly,
                Some(f) => match evaluate(f, &m) {
                    Err(_) => {
                        self.structural_errors.fetch_add(1, Ordering::Relaxed);
                        continue;
                    }
                    Ok(ev) if ev.is_complete() => PredictedArgs::Full(ev.to_args()),
                    Ok(ev) if ev.bound_count() > 0 => PredictedArgs::Partial(ev.to_args()),
                    Ok(_) => PredictedArgs::ToolOnly,
                },
            };
            out.push(PredictedInvocation {
                tool_type: pattern.target.clone(),
                args,
                probability: pattern.p,
                source_pattern: id,
                created_at: latest.t_end,
            });
        }
        out.sort_by(|a, b| {
            b.probability
                .total_cmp(&a.probability)
                .then(a.source_pattern.cmp(&b.source_pattern))
        });
        out
    }
}

/// Per-session windows over a shared pattern index.
#[derive(Debug, Clone)]
pub struct Predictor {
    index: Arc<PatternIndex>,
    capacity: usize,
    windows: HashMap<String, PredictionWindow>,
}

impl Predictor {
    pub fn new(index: Arc<PatternIndex>, capacity: usize) -> Self {
        let capacity = capacity.max(index.horizon());
        Self {
            index,
            capacity,
            windows: HashMap::new(),
        }
    }

    pub fn index(&self) -> &Arc<PatternIndex> {
        &self.index
    }

    pub fn observe(&mut self, e: &Event) {
        let cap = self.capacity;
        self.windows
            .entry(e.session_id.clone())
            .or_insert_with(|| PredictionWindow::new(cap))
            .observe(e.clone());
    }

    pub fn window(&self, session_id: &str) -> Option<&PredictionWindow> {
        self.windows.get(session_id)
    }

    pub fn predict(&self, session_id: &str) -> Vec<PredictedInvocation> {
        self.windows
            .get(session_id)
            .map(|w| self.index.predict(w))
            .unwrap_or_default()
    }

    /// Drops a finished session's window.
    pub fn end_session(&mut self, session_id: &str) {
        self.windows.remove(session_id);
    }
}

#[derive(Debug, Clone, Default)]
pub struct ScoreOptions {
    pub window: Option<usize>,
    /// When set, only predictions the policy admits at full depth count as
    /// speculatively executed for the hit rate.
    pub policy: Option<SpeculationPolicy>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// Tool calls that have a following tool call in their session.
    pub steps: u64,
    pub top1_hits: u64,
    pub top3_hits: u64,
    pub spec_hits: u64,
    pub top1: f64,
    pub top3: f64,
    pub hit_rate: f64,
}

/// Replays held-out traces and scores next-call predictions.
pub fn score_accuracy(traces: &[Session], pool: &PatternPool, opts: &ScoreOptions) -> AccuracyReport {
    let index = PatternIndex::new(pool.clone());
    let capacity = opts.window.unwrap_or(DEFAULT_WINDOW).max(pool.config.k);
    let mut r = AccuracyReport::default();
    for s in traces {
        let calls: Vec<&Event> = s.tool_calls().collect();
        let mut window = PredictionWindow::new(capacity);
        for pair in calls.windows(2) {
            let (cur, next) = (pair[0], pair[1]);
            window.observe(cur.clone());
            let preds = index.predict(&window);
            r.steps += 1;
            if preds.first().is_some_and(|p| p.tool_type == next.tool_type) {
                r.top1_hits += 1;
            }
            if preds.iter().take(3).any(|p| p.tool_type == next.tool_type) {
                r.top3_hits += 1;
            }
            let hit = preds.iter().any(|p| {
                let eligible = match &opts.policy {
                    Some(policy) => policy.max_level(&p.tool_type) == Some(SpeculationLevel::Full),
                    None => true,
                };
                let PredictedArgs::Full(args) = &p.args else { return false };
                eligible && p.tool_type == next.tool_type && canonical_eq(args, &next.args)
            });
            if hit {
                r.spec_hits += 1;
            }
        }
    }
    if r.steps > 0 {
        let n = r.steps as f64;
        r.top1 = r.top1_hits as f64 / n;
        r.top3 = r.top3_hits as f64 / n;
        r.hit_rate = r.spec_hits as f64 / n;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::Status;
    use crate::miner::PatternPool;
    use serde_json::json;

    const TABLE_POOL: &str = r#"{
      "version": 1,
      "config": {"k": 3, "sigma": 5, "tau": 0.5},
      "patterns": [
        {"context": [{"tool": "Search", "status": "success"}], "target": "Web_fetch",
         "mapping": "arg0 = SearchRes[\"list\"][0][\"url\"]", "p": 0.9, "support": 10},
        {"context": [{"tool": "Search", "status": "success"}, {"tool": "Web_fetch", "status": "fail"}],
         "target": "Web_fetch", "mapping": "arg0 = SearchRes[\"list\"][1][\"url\"]", "p": 0.8, "support": 5}
      ]
    }"#;

    fn search() -> Event {
        Event::tool_call(
            "s",
            0,
            "Search",
            Status::Success,
            json!({"q": "x"}),
            json!({"list": [{"url": "a.com"}, {"url": "b.com"}]}),
            0,
            100,
        )
    }

    fn table_index() -> PatternIndex {
        PatternIndex::new(PatternPool::from_json(TABLE_POOL).unwrap())
    }

    #[test]
    fn window_evicts_oldest() {
        let mut w = PredictionWindow::new(3);
        for i in 0..4 {
            let mut e = search();
            e.seq = i;
            w.observe(e);
        }
        let seqs: Vec<u64> = w.events().map(|e| e.seq).collect();
        assert_eq!(seqs, vec![1, 2, 3]);
    }

    #[test]
    fn llm_steps_are_not_retained() {
        let mut w = PredictionWindow::new(3);
        w.observe(Event::llm_step("s", 0, 0, 1));
        assert!(w.is_empty());
    }

    #[test]
    fn p1_fires_after_search() {
        let idx = table_index();
        let mut w = PredictionWindow::new(16);
        w.observe(search());
        let preds = idx.predict(&w);
        assert_eq!(preds.len(), 1);
        assert_eq!(preds[0].tool_type, "Web_fetch");
        assert_eq!(preds[0].args, PredictedArgs::Full(json!({"arg0": "a.com"})));
        assert_eq!(preds[0].probability, 0.9);
        assert_eq!(preds[0].created_at, 100);
    }

    #[test]
    fn p2_fires_after_failed_fetch() {
        let idx = table_index();
        let mut w = PredictionWindow::new(16);
        w.observe(search());
        w.observe(Event::tool_call("s", 1, "Web_fetch", Status::Fail, json!({"arg0": "a.com"}), Value::Null, 100, 200));
        let preds = idx.predict(&w);
        assert_eq!(preds.len(), 1);
        assert_eq!(preds[0].source_pattern, 1);
        assert_eq!(preds[0].args, PredictedArgs::Full(json!({"arg0": "b.com"})));
        assert_eq!(preds[0].probability, 0.8);
    }

    #[test]
    fn empty_pool_predicts_nothing() {
        let idx = PatternIndex::new(PatternPool::empty());
        let mut w = PredictionWindow::new(16);
        w.observe(search());
        assert!(idx.predict(&w).is_empty());
    }

    #[test]
    fn unbound_arguments_give_tool_only() {
        let idx = table_index();
        let mut w = PredictionWindow::new(16);
        let mut s = search();
        s.result = json!({"list": []});
        w.observe(s);
        assert_eq!(idx.predict(&w)[0].args, PredictedArgs::ToolOnly);
    }

    #[test]
    fn sessions_do_not_share_windows() {
        let mut pred = Predictor::new(Arc::new(table_index()), 16);
        pred.observe(&search());
        let mut other = search();
        other.session_id = "t".into();
        other.tool_type = "Other".into();
        pred.observe(&other);
        assert_eq!(pred.predict("s").len(), 1);
        assert!(pred.predict("t").is_empty());
    }
}
