//! Test-side oracles. Everything here is written independently of the
//! library algorithms it checks.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use spectool_core::event::{Event, EventSignature, Session, Status};
use spectool_core::matching::MatchMode;
use std::collections::{BTreeMap, BTreeSet};

pub type Sig = (String, Status);

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sig(tool: &str, status: Status) -> EventSignature {
    EventSignature {
        tool_type: tool.to_string(),
        status,
    }
}

/// Sessions of tool calls whose payloads never repeat a value, so no argument
/// is derivable and only structure matters.
pub fn payload_free_sessions(seqs: &[Vec<Sig>]) -> Vec<Session> {
    let mut n = 0u64;
    seqs.iter()
        .enumerate()
        .map(|(si, seq)| {
            let events = seq
                .iter()
                .enumerate()
                .map(|(j, (tool, st))| {
                    n += 1;
                    let t = j as u64 * 10;
                    Event::tool_call(
                        format!("s{si}"),
                        j as u64,
                        tool.clone(),
                        *st,
                        json!({ "a": format!("arg-{n}") }),
                        json!({ "r": format!("res-{n}") }),
                        t,
                        t + 5,
                    )
                })
                .collect();
            Session::new(format!("s{si}"), events)
        })
        .collect()
}

/// Random corpus over `tools` tool names; every call fails with `fail_p`.
pub fn random_sequences(r: &mut ChaCha8Rng, tools: usize, sessions: usize, max_len: usize, fail_p: f64) -> Vec<Vec<Sig>> {
    (0..sessions)
        .map(|_| {
            let len = r.random_range(1..=max_len);
            (0..len)
                .map(|_| {
                    let t = format!("t{}", r.random_range(0..tools));
                    let st = if r.random_bool(fail_p) { Status::Fail } else { Status::Success };
                    (t, st)
                })
                .collect()
        })
        .collect()
}

pub fn is_subsequence<T: PartialEq>(needle: &[T], hay: &[T]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

/// Does `ctx` match the calls `seq[..=anchor]`?
pub fn oracle_matches(ctx: &[Sig], seq: &[Sig], anchor: usize, mode: MatchMode, horizon: usize) -> bool {
    let n = ctx.len();
    if seq[anchor] != ctx[n - 1] {
        return false;
    }
    let width = horizon.max(n);
    let lo = (anchor + 1).saturating_sub(width);
    let recent = &seq[lo..=anchor];
    match mode {
        MatchMode::Contiguous => recent.len() >= n && recent[recent.len() - n..] == *ctx,
        MatchMode::Embedded => is_subsequence(&ctx[..n - 1], &recent[..recent.len() - 1]),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefPattern {
    pub context: Vec<Sig>,
    pub target: String,
    pub matches: usize,
    pub hits: usize,
    pub support: usize,
}

impl RefPattern {
    pub fn p(&self) -> f64 {
        self.hits as f64 / self.matches as f64
    }
}

/// Every sequence over `alphabet` of length `1..=k`.
pub fn all_sequences(alphabet: &[Sig], k: usize) -> Vec<Vec<Sig>> {
    let mut out: Vec<Vec<Sig>> = Vec::new();
    let mut layer: Vec<Vec<Sig>> = vec![Vec::new()];
    for _ in 0..k {
        let mut next = Vec::new();
        for s in &layer {
            for a in alphabet {
                let mut t = s.clone();
                t.push(a.clone());
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// Exhaustive reference miner for payload-free corpora: every context over
/// the observed alphabet, support counted over the windows preceding each
/// target call, confidence counted over every anchored match.
pub fn brute_force_mine(seqs: &[Vec<Sig>], k: usize, sigma: usize, tau: f64, mode: MatchMode) -> Vec<RefPattern> {
    let alphabet: Vec<Sig> = seqs.iter().flatten().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let targets: BTreeSet<String> = seqs.iter().flatten().map(|(t, _)| t.clone()).collect();
    let contexts = all_sequences(&alphabet, k);
    let mut out = Vec::new();
    for target in &targets {
        let mut windows: Vec<&[Sig]> = Vec::new();
        for s in seqs {
            for i in 1..s.len() {
                if &s[i].0 == target {
                    windows.push(&s[i.saturating_sub(k)..i]);
                }
            }
        }
        for ctx in &contexts {
            let support = windows.iter().filter(|w| is_subsequence(ctx, w)).count();
            if support < sigma || support == 0 {
                continue;
            }
            let is_suffix = windows.iter().any(|w| w.len() >= ctx.len() && w[w.len() - ctx.len()..] == ctx[..]);
            if !is_suffix {
                continue;
            }
            let (mut matches, mut hits) = (0, 0);
            for s in seqs {
                for a in 0..s.len() {
                    if oracle_matches(ctx, s, a, mode, k) {
                        matches += 1;
                        if s.get(a + 1).is_some_and(|n| &n.0 == target) {
                            hits += 1;
                        }
                    }
                }
            }
            if matches > 0 && hits as f64 / matches as f64 >= tau {
                out.push(RefPattern {
                    context: ctx.clone(),
                    target: target.clone(),
                    matches,
                    hits,
                    support,
                });
            }
        }
    }
    out
}

/// Transition counts `(from, to) -> n` over consecutive tool calls.
pub fn transition_counts(sessions: &[Session]) -> BTreeMap<(EventSignature, String), usize> {
    let mut m = BTreeMap::new();
    for s in sessions {
        let calls: Vec<&Event> = s.tool_calls().collect();
        for w in calls.windows(2) {
            *m.entry((w[0].signature().unwrap(), w[1].tool_type.clone())).or_insert(0) += 1;
        }
    }
    m
}

/// Count of tool calls with the given signature.
pub fn signature_count(sessions: &[Session], s: &EventSignature) -> usize {
    sessions
        .iter()
        .flat_map(|x| x.tool_calls())
        .filter(|e| e.signature().as_ref() == Some(s))
        .count()
}

/// Random JSON payload tree.
pub fn random_payload(r: &mut ChaCha8Rng, depth: u32) -> Value {
    let choice = if depth == 0 { r.random_range(0..3) } else { r.random_range(0..5) };
    match choice {
        0 => json!(r.random_range(-1000i64..1000)),
        1 => json!(format!("s{}", r.random_range(0..10_000))),
        2 => json!(r.random_bool(0.5)),
        3 => Value::Array((0..r.random_range(0..4)).map(|_| random_payload(r, depth - 1)).collect()),
        _ => {
            let mut m = serde_json::Map::new();
            for _ in 0..r.random_range(0..4) {
                m.insert(format!("k{}", r.random_range(0..20)), random_payload(r, depth - 1));
            }
            Value::Object(m)
        }
    }
}

/// Independent next-call scoring of a pool over sessions: matches contexts
/// with [`oracle_matches`], ranks by `p` then pattern id, and counts.
/// Returns `(steps, top1_hits, top3_hits, full_arg_hits)`.
pub fn oracle_scores(
    sessions: &[Session],
    pool: &spectool_core::miner::PatternPool,
) -> (usize, usize, usize, usize) {
    use spectool_core::canonical::canonical_form;
    use spectool_core::mapping::{evaluate, MatchedContext};
    use spectool_core::matching::match_context;
    let (mut steps, mut t1, mut t3, mut hits) = (0, 0, 0, 0);
    for s in sessions {
        let calls: Vec<&Event> = s.tool_calls().collect();
        let sigs: Vec<Sig> = calls.iter().map(|e| (e.tool_type.clone(), e.status)).collect();
        for i in 0..calls.len().saturating_sub(1) {
            steps += 1;
            let next = calls[i + 1];
            let mut ranked: Vec<(f64, usize)> = Vec::new();
            let mut full_hit = false;
            for (id, p) in pool.patterns.iter().enumerate() {
                let ctx: Vec<Sig> = p.context.iter().map(|c| (c.tool_type.clone(), c.status)).collect();
                if !oracle_matches(&ctx, &sigs[..=i], i, pool.config.match_mode, pool.config.k) {
                    continue;
                }
                ranked.push((p.p, id));
                if p.target != next.tool_type {
                    continue;
                }
                if let Some(f) = &p.mapping {
                    let m: MatchedContext<'_> =
                        match_context(&p.context, &calls[..=i], pool.config.match_mode, pool.config.k).unwrap();
                    if let Ok(ev) = evaluate(f, &m) {
                        if ev.is_complete() && canonical_form(&ev.to_args()) == canonical_form(&next.args) {
                            full_hit = true;
                        }
                    }
                }
            }
            ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let tool = |k: usize| &pool.patterns[ranked[k].1].target;
            if !ranked.is_empty() && tool(0) == &next.tool_type {
                t1 += 1;
            }
            if (0..ranked.len().min(3)).any(|k| tool(k) == &next.tool_type) {
                t3 += 1;
            }
            hits += usize::from(full_hit);
        }
    }
    (steps, t1, t3, hits)
}

/// search then web_fetch on the first hit's url, with fixed latencies.
pub fn chain_workload(think1: u64, think2: u64, search_ms: u64, fetch_ms: u64) -> spectool_core::sim::ResolvedWorkload {
    let text = format!(
        r#"{{"id":"chain","tools":[
            {{"tool":"search","latency":{{"fixed":{{"ms":{search_ms}}}}},"result":{{"search_list":{{"n":3}}}}}},
            {{"tool":"web_fetch","latency":{{"fixed":{{"ms":{fetch_ms}}}}},"result":"page"}}],
          "scripts":[{{"id":"s","steps":[
            {{"think_ms":{think1},"tool":"search","args":{{"query":{{"literal":"rust"}}}}}},
            {{"think_ms":{think2},"tool":"web_fetch","args":{{"url":{{"ref":{{"step":0,"src":"result","path":["list",0,"url"]}}}}}}}}]}}]}}"#
    );
    spectool_core::sim::Workload::from_json(&text).unwrap().resolve().unwrap()
}

/// The single perfect pattern `search -> web_fetch(url = list[0].url)`.
pub fn visit_pool() -> spectool_core::miner::PatternPool {
    use spectool_core::mapping::{Lookup, MappingExpr, PathStep, Source, ValueMapping};
    use spectool_core::miner::{PatternPool, PatternTuple, PoolConfig};
    let url = MappingExpr::PathLookup(Lookup {
        ctx: 0,
        src: Source::Result,
        path: vec![PathStep::Key("list".into()), PathStep::Index(0), PathStep::Key("url".into())],
    });
    PatternPool::new(
        PoolConfig::default(),
        vec![PatternTuple {
            context: vec![spectool_core::EventSignature::success("search")],
            target: "web_fetch".into(),
            mapping: Some(ValueMapping::single("url", url)),
            p: 1.0,
            support: 10,
        }],
    )
}

/// Motif workload with `scripts` expanded scripts plus a pool mined with
/// default settings from an independent corpus of the same mix.
pub fn motif_setup(
    mix: spectool_core::sim::MotifMix,
    scripts: usize,
    workload_seed: u64,
    corpus_sessions: usize,
    corpus_seed: u64,
) -> (spectool_core::sim::ResolvedWorkload, spectool_core::miner::PatternPool) {
    use spectool_core::miner::{mine, MiningConfig, PatternPool};
    let w = spectool_core::sim::Workload {
        id: "motifs".into(),
        tools: vec![],
        scripts: vec![],
        motif_mix: Some(mix.clone()),
        motif_scripts: scripts,
        seed: workload_seed,
    }
    .resolve()
    .unwrap();
    let tools: Vec<_> = w.tools.values().cloned().collect();
    let c = spectool_core::sim::generate_corpus(&mix, &tools, corpus_sessions, corpus_seed);
    let cfg = MiningConfig::default();
    let pool = PatternPool::new((&cfg).into(), mine(&c.sessions, &cfg));
    (w, pool)
}

pub fn script_ids(w: &spectool_core::sim::ResolvedWorkload) -> Vec<String> {
    w.scripts.keys().cloned().collect()
}
