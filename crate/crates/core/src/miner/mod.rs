//! Two-phase pattern mining: frequent structural contexts per target tool,
//! then value-mapping inference and confidence validation.

mod pool;
mod prefixspan;

pub use pool::{load_pool, save_pool, PatternPool, PoolConfig, PoolError, POOL_VERSION};
pub use prefixspan::{mine_frequent_subsequences, FrequentSequence};

use crate::event::{Event, EventSignature, Session};
use crate::mapping::{holds, infer_mapping, InferConfig, MatchedContext, Occurrence, ValueMapping};
use crate::matching::{match_context, MatchMode};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};

/// Mined unit of speculation `(context, target, mapping, probability)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternTuple {
    pub context: Vec<EventSignature>,
    pub target: String,
    pub mapping: Option<ValueMapping>,
    pub p: f64,
    /// Preceding windows containing the context.
    pub support: usize,
}

/// Which frequent subsequences become candidate contexts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextGenerator {
    /// Frequent subsequences that occur as a contiguous suffix of some window.
    #[default]
    Suffixes,
    /// Every frequent subsequence.
    Subsequences,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiningConfig {
    /// Maximum context length; also the matching horizon.
    pub k: usize,
    /// Minimum support, in preceding windows.
    pub sigma: usize,
    /// Confidence threshold.
    pub tau: f64,
    pub match_mode: MatchMode,
    pub generator: ContextGenerator,
    pub infer: InferConfig,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            k: 3,
            sigma: 5,
            tau: 0.5,
            match_mode: MatchMode::Embedded,
            generator: ContextGenerator::Suffixes,
            infer: InferConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("k must be at least 1")]
    K,
    #[error("sigma must be at least 1")]
    Sigma,
    #[error("tau must lie in (0, 1], got {0}")]
    Tau(f64),
}

impl MiningConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.k == 0 {
            return Err(ConfigError::K);
        }
        if self.sigma == 0 {
            return Err(ConfigError::Sigma);
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(ConfigError::Tau(self.tau));
        }
        Ok(())
    }
}

/// Outcome of validating one `(c, t, f)` candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validation {
    /// Anchored matches of the context.
    pub matches: usize,
    /// Matches followed by the target where the mapping holds.
    pub hits: usize,
    pub p: f64,
}

/// Tool calls of each session, the unit every mining pass iterates.
pub(crate) struct CallIndex<'a> {
    pub sessions: Vec<Vec<&'a Event>>,
    by_anchor: HashMap<EventSignature, Vec<(usize, usize)>>,
}

impl<'a> CallIndex<'a> {
    pub fn new(traces: &'a [Session]) -> Self {
        let sessions: Vec<Vec<&Event>> = traces.iter().map(|s| s.tool_calls().collect()).collect();
        let mut by_anchor: HashMap<EventSignature, Vec<(usize, usize)>> = HashMap::new();
        for (si, calls) in sessions.iter().enumerate() {
            for (i, e) in calls.iter().enumerate() {
                if let Some(sig) = e.signature() {
                    by_anchor.entry(sig).or_default().push((si, i));
                }
            }
        }
        Self { sessions, by_anchor }
    }

    /// Every anchored match of `context`, with the event that follows it.
    pub fn matches(
        &self,
        context: &[EventSignature],
        mode: MatchMode,
        horizon: usize,
    ) -> Vec<(MatchedContext<'a>, Option<&'a Event>)> {
        let Some(last) = context.last() else { return Vec::new() };
        let Some(anchors) = self.by_anchor.get(last) else { return Vec::new() };
        let mut out = Vec::new();
        for &(si, i) in anchors {
            let calls = &self.sessions[si];
            if let Some(m) = match_context(context, &calls[..=i], mode, horizon) {
                out.push((m, calls.get(i + 1).copied()));
            }
        }
        out
    }
}

/// Confidence of `c -> t` under mapping `f` (or tool identity only when `f` is `None`).
pub fn validate(
    context: &[EventSignature],
    target: &str,
    mapping: Option<&ValueMapping>,
    traces: &[Session],
    mode: MatchMode,
    horizon: usize,
) -> Validation {
    let index = CallIndex::new(traces);
    validate_indexed(&index, context, target, mapping, mode, horizon)
}

fn validate_indexed(
    index: &CallIndex<'_>,
    context: &[EventSignature],
    target: &str,
    mapping: Option<&ValueMapping>,
    mode: MatchMode,
    horizon: usize,
) -> Validation {
    let matches = index.matches(context, mode, horizon);
    let hits = matches
        .iter()
        .filter(|(m, next)| match next {
            Some(e) if e.tool_type == target => mapping.is_none_or(|f| holds(f, m, &e.args)),
            _ => false,
        })
        .count();
    let p = if matches.is_empty() {
        0.0
    } else {
        hits as f64 / matches.len() as f64
    };
    Validation {
        matches: matches.len(),
        hits,
        p,
    }
}

/// Mines and validates the pattern pool.
///
/// Output order: `p` descending, longer contexts first, then target and
/// context lexicographically.
pub fn mine(traces: &[Session], cfg: &MiningConfig) -> Vec<PatternTuple> {
    let index = CallIndex::new(traces);
    let targets: BTreeSet<&str> = index.sessions.iter().flatten().map(|e| e.tool_type.as_str()).collect();
    let mut out = Vec::new();
    for target in targets {
        let windows = preceding_windows(&index, target, cfg.k);
        if windows.len() < cfg.sigma {
            continue;
        }
        let mut frequent = mine_frequent_subsequences(&windows, cfg.sigma, cfg.k);
        if cfg.generator == ContextGenerator::Suffixes {
            let suffixes: BTreeSet<&[EventSignature]> = windows
                .iter()
                .flat_map(|w| (0..w.len()).map(move |i| &w[i..]))
                .collect();
            frequent.retain(|f| suffixes.contains(f.items.as_slice()));
        }
        for candidate in frequent {
            let context = candidate.items;
            let matches = index.matches(&context, cfg.match_mode, cfg.k);
            if matches.is_empty() {
                continue;
            }
            let occurrences: Vec<Occurrence<'_>> = matches
                .iter()
                .filter_map(|(m, next)| match next {
                    Some(e) if e.tool_type == target => Some(Occurrence {
                        context: m.clone(),
                        target: e,
                    }),
                    _ => None,
                })
                .collect();
            let mapping = infer_mapping(&occurrences, &cfg.infer);
            let hits = match &mapping {
                Some(f) => occurrences
                    .iter()
                    .filter(|o| holds(f, &o.context, &o.target.args))
                    .count(),
                None => occurrences.len(),
            };
            let p = hits as f64 / matches.len() as f64;
            if p >= cfg.tau {
                out.push(PatternTuple {
                    context,
                    target: target.to_string(),
                    mapping,
                    p,
                    support: candidate.support,
                });
            }
        }
    }
    sort_patterns(&mut out);
    out
}

/// Signatures of the up-to-`k` tool calls directly before each `target` call.
fn preceding_windows(index: &CallIndex<'_>, target: &str, k: usize) -> Vec<Vec<EventSignature>> {
    let mut windows = Vec::new();
    for calls in &index.sessions {
        for (i, e) in calls.iter().enumerate() {
            if i == 0 || e.tool_type != target {
                continue;
            }
            let lo = i.saturating_sub(k);
            windows.push(calls[lo..i].iter().filter_map(|e| e.signature()).collect());
        }
    }
    windows
}

pub fn sort_patterns(patterns: &mut [PatternTuple]) {
    patterns.sort_by(|a, b| {
        b.p.total_cmp(&a.p)
            .then(b.context.len().cmp(&a.context.len()))
            .then_with(|| a.target.cmp(&b.target))
            .then_with(|| a.context.cmp(&b.context))
    });
}
