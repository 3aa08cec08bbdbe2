use super::{
    evaluate_expr, scalar_text, ArgBinding, Lookup, MappingExpr, MatchedContext, Normalization, PathStep,
    Source, TemplatePart, ValueMapping,
};
use crate::canonical::canonical_eq;
use crate::event::Event;
use serde_json::Value;
use std::collections::{BTreeSet, HashSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferConfig {
    /// Minimum fraction of occurrences an expression must reproduce.
    pub validation_fraction: f64,
    /// Node budget for one payload traversal.
    pub node_budget: usize,
    /// Number of occurrences used to propose candidate expressions.
    pub proposal_occurrences: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            validation_fraction: 0.9,
            node_budget: 10_000,
            proposal_occurrences: 8,
        }
    }
}

/// A concrete `context -> target` occurrence.
#[derive(Debug, Clone)]
pub struct Occurrence<'a> {
    pub context: MatchedContext<'a>,
    pub target: &'a Event,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PathSearch {
    pub paths: Vec<Vec<PathStep>>,
    /// The node budget ran out before the payload was fully traversed.
    pub truncated: bool,
}

/// Depth-first enumeration of every path whose scalar leaf equals `target`.
pub fn candidate_paths(payload: &Value, target: &Value, node_budget: usize) -> PathSearch {
    let mut out = PathSearch::default();
    let mut visited = 0usize;
    let mut path = Vec::new();
    walk(payload, &mut path, &mut visited, node_budget, &mut |p, v| {
        if is_scalar(v) && canonical_eq(v, target) {
            out.paths.push(p.to_vec());
        }
    })
    .unwrap_or_else(|()| out.truncated = true);
    out
}

fn is_scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

/// Pre-order traversal; `Err(())` once the budget is spent.
fn walk(
    v: &Value,
    path: &mut Vec<PathStep>,
    visited: &mut usize,
    budget: usize,
    visit: &mut dyn FnMut(&[PathStep], &Value),
) -> Result<(), ()> {
    if *visited >= budget {
        return Err(());
    }
    *visited += 1;
    visit(path, v);
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                path.push(PathStep::Key(k.clone()));
                let r = walk(child, path, visited, budget, visit);
                path.pop();
                r?;
            }
        }
        Value::Array(a) => {
            for (i, child) in a.iter().enumerate() {
                path.push(PathStep::Index(i));
                let r = walk(child, path, visited, budget, visit);
                path.pop();
                r?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// Infers one expression per target argument.
///
/// Classes are tried in the order path lookup, indexed fallback, one-hole
/// format template; the first candidate reproducing the actual argument on
/// at least `validation_fraction` of the occurrences wins. Failed context
/// events are never used as payload sources. Returns `None` when fewer than
/// two occurrences are given or no argument is derivable.
pub fn infer_mapping(occurrences: &[Occurrence<'_>], cfg: &InferConfig) -> Option<ValueMapping> {
    if occurrences.len() < 2 {
        return None;
    }
    let mut arg_names = BTreeSet::new();
    for occ in occurrences {
        if let Value::Object(m) = &occ.target.args {
            arg_names.extend(m.keys().cloned());
        }
    }
    let mut mapping = ValueMapping::default();
    for arg in arg_names {
        match infer_arg(occurrences, &arg, cfg) {
            Some(expr) => mapping.bindings.push(ArgBinding { arg, expr }),
            None => mapping.unmapped.push(arg),
        }
    }
    if mapping.bindings.is_empty() {
        None
    } else {
        Some(mapping)
    }
}

fn infer_arg(occurrences: &[Occurrence<'_>], arg: &str, cfg: &InferConfig) -> Option<MappingExpr> {
    let proposers: Vec<&Occurrence<'_>> = occurrences
        .iter()
        .filter(|o| o.target.args.get(arg).is_some_and(is_scalar))
        .take(cfg.proposal_occurrences)
        .collect();
    if proposers.is_empty() {
        return None;
    }
    let accepts = |expr: &MappingExpr| {
        let ok = occurrences
            .iter()
            .filter(|o| match (evaluate_expr(expr, &o.context), o.target.args.get(arg)) {
                (Ok(Some(v)), Some(actual)) => canonical_eq(&v, actual),
                _ => false,
            })
            .count();
        ok as f64 >= cfg.validation_fraction * occurrences.len() as f64
    };

    // Path lookups; also the seed set for indexed fallbacks.
    let mut seen = HashSet::new();
    let mut lookups: Vec<(Lookup, &Occurrence<'_>)> = Vec::new();
    for occ in &proposers {
        let actual = &occ.target.args[arg];
        for (ctx, src, payload) in sources(&occ.context) {
            for path in candidate_paths(payload, actual, cfg.node_budget).paths {
                if path.is_empty() {
                    continue;
                }
                let l = Lookup { ctx, src, path };
                if seen.insert(l.clone()) {
                    lookups.push((l, occ));
                }
            }
        }
    }
    for (l, _) in &lookups {
        let expr = MappingExpr::PathLookup(l.clone());
        if accepts(&expr) {
            return Some(expr);
        }
    }

    let mut seen = HashSet::new();
    for (l, occ) in &lookups {
        for (i, step) in l.path.iter().enumerate() {
            let PathStep::Index(idx) = step else { continue };
            let failures = occ.context.failures_after(l.ctx, &occ.target.tool_type);
            let Some(start) = idx.checked_sub(failures) else { continue };
            let expr = MappingExpr::IndexedFallback {
                ctx: l.ctx,
                src: l.src,
                prefix: l.path[..i].to_vec(),
                start,
                suffix: l.path[i + 1..].to_vec(),
                counted_tool: occ.target.tool_type.clone(),
            };
            if seen.insert(expr.clone()) && accepts(&expr) {
                return Some(expr);
            }
        }
    }

    let mut seen = HashSet::new();
    for occ in &proposers {
        let Some(actual) = occ.target.args[arg].as_str() else { continue };
        for (ctx, src, payload) in sources(&occ.context) {
            for expr in template_candidates(payload, ctx, src, actual, cfg.node_budget) {
                if seen.insert(expr.clone()) && accepts(&expr) {
                    return Some(expr);
                }
            }
        }
    }
    None
}

/// Successful context events' payloads, results before args.
fn sources<'a>(m: &MatchedContext<'a>) -> Vec<(usize, Source, &'a Value)> {
    let mut out = Vec::new();
    for ctx in 0..m.len() {
        let Some(e) = m.event(ctx) else { continue };
        if !e.status.is_success() {
            continue;
        }
        out.push((ctx, Source::Result, &e.result));
        out.push((ctx, Source::Args, &e.args));
    }
    out
}

/// One-hole templates `prefix + norm(leaf) + suffix` reproducing `actual`.
fn template_candidates(
    payload: &Value,
    ctx: usize,
    src: Source,
    actual: &str,
    budget: usize,
) -> Vec<MappingExpr> {
    let mut leaves: Vec<(Vec<PathStep>, String)> = Vec::new();
    let mut visited = 0;
    let _ = walk(payload, &mut Vec::new(), &mut visited, budget, &mut |p, v| {
        if !p.is_empty() {
            if let Some(s) = scalar_text(v) {
                leaves.push((p.to_vec(), s));
            }
        }
    });
    let mut out = Vec::new();
    for (path, text) in leaves {
        for norm in Normalization::ALL {
            let n = norm.apply(&text);
            if n.is_empty() {
                continue;
            }
            for (at, _) in actual.match_indices(n.as_str()) {
                let prefix = &actual[..at];
                let suffix = &actual[at + n.len()..];
                if prefix.is_empty() && suffix.is_empty() && norm == Normalization::None {
                    continue;
                }
                let mut parts = Vec::new();
                if !prefix.is_empty() {
                    parts.push(TemplatePart::Lit(prefix.to_string()));
                }
                parts.push(TemplatePart::Hole(Lookup {
                    ctx,
                    src,
                    path: path.clone(),
                }));
                if !suffix.is_empty() {
                    parts.push(TemplatePart::Lit(suffix.to_string()));
                }
                out.push(MappingExpr::FormatTemplate { parts, normalize: norm });
            }
        }
    }
    out
}
