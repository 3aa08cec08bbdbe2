//! Late-bound argument derivation.
//!
//! A [`ValueMapping`] is a small symbolic program that computes a predicted
//! tool's arguments from the payloads of the events that matched a pattern's
//! context. It is stored with the pattern and only evaluated once concrete
//! upstream payloads exist.

mod alias;
mod infer;

pub use alias::{parse_alias, AliasError};
pub use infer::{candidate_paths, infer_mapping, InferConfig, Occurrence, PathSearch};

use crate::event::Event;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::fmt;

/// One step of a path into a JSON payload.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PathStep {
    Index(usize),
    Key(String),
}

impl fmt::Display for PathStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathStep::Index(i) => write!(f, "[{i}]"),
            PathStep::Key(k) => write!(f, "[{}]", serde_json::to_string(k).map_err(|_| fmt::Error)?),
        }
    }
}

pub fn lookup<'a>(root: &'a Value, path: &[PathStep]) -> Option<&'a Value> {
    path.iter().try_fold(root, |v, step| match (step, v) {
        (PathStep::Key(k), Value::Object(m)) => m.get(k),
        (PathStep::Index(i), Value::Array(a)) => a.get(*i),
        _ => None,
    })
}

/// Which payload of a context event an expression reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Args,
    Result,
}

impl Source {
    fn of(self, e: &Event) -> &Value {
        match self {
            Source::Args => &e.args,
            Source::Result => &e.result,
        }
    }
}

/// `payload(ctx)[path...]`
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lookup {
    pub ctx: usize,
    pub src: Source,
    pub path: Vec<PathStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    None,
    Trim,
    Lowercase,
}

impl Normalization {
    pub const ALL: [Normalization; 3] = [Normalization::None, Normalization::Trim, Normalization::Lowercase];

    pub fn apply(self, s: &str) -> String {
        match self {
            Normalization::None => s.to_string(),
            Normalization::Trim => s.trim().to_string(),
            Normalization::Lowercase => s.to_lowercase(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TemplatePart {
    Lit(String),
    Hole(Lookup),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingExpr {
    PathLookup(Lookup),
    /// `payload(ctx)[prefix][start + failures][suffix]`, where `failures`
    /// is the number of failed `counted_tool` calls after the context
    /// event, up to and including the anchor.
    IndexedFallback {
        ctx: usize,
        src: Source,
        prefix: Vec<PathStep>,
        start: usize,
        suffix: Vec<PathStep>,
        counted_tool: String,
    },
    /// String concatenation of literals and normalized holes.
    FormatTemplate {
        parts: Vec<TemplatePart>,
        #[serde(default)]
        normalize: Normalization,
    },
}

impl MappingExpr {
    /// Context positions this expression reads from.
    pub fn context_positions(&self) -> Vec<usize> {
        match self {
            MappingExpr::PathLookup(l) => vec![l.ctx],
            MappingExpr::IndexedFallback { ctx, .. } => vec![*ctx],
            MappingExpr::FormatTemplate { parts, .. } => parts
                .iter()
                .filter_map(|p| match p {
                    TemplatePart::Hole(l) => Some(l.ctx),
                    TemplatePart::Lit(_) => None,
                })
                .collect(),
        }
    }

    fn validate(&self) -> Result<(), MappingError> {
        match self {
            MappingExpr::PathLookup(l) if l.path.is_empty() => Err(MappingError::EmptyPath),
            MappingExpr::FormatTemplate { parts, .. } => {
                for p in parts {
                    if let TemplatePart::Hole(l) = p {
                        if l.path.is_empty() {
                            return Err(MappingError::EmptyPath);
                        }
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgBinding {
    pub arg: String,
    pub expr: MappingExpr,
}

/// Argument-derivation program of a pattern.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValueMapping {
    pub bindings: Vec<ArgBinding>,
    /// Target arguments observed during inference that no expression derives.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unmapped: Vec<String>,
}

impl ValueMapping {
    pub fn single(arg: impl Into<String>, expr: MappingExpr) -> Self {
        Self {
            bindings: vec![ArgBinding { arg: arg.into(), expr }],
            unmapped: Vec::new(),
        }
    }

    /// Checks structural invariants against a context of `context_len` events.
    pub fn check(&self, context_len: usize) -> Result<(), MappingError> {
        for b in &self.bindings {
            b.expr.validate()?;
            for pos in b.expr.context_positions() {
                if pos >= context_len {
                    return Err(MappingError::ContextOutOfRange { pos, len: context_len });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MappingError {
    #[error("context position {pos} out of range for a context of {len} events")]
    ContextOutOfRange { pos: usize, len: usize },
    #[error("path lookup with an empty path")]
    EmptyPath,
}

/// Events matched against a pattern context.
///
/// `span` holds the tool-call events from the first matched event through
/// the anchor (the most recent event); `positions[i]` is the index in `span`
/// of the event matched to context element `i`.
#[derive(Debug, Clone)]
pub struct MatchedContext<'a> {
    pub span: Vec<&'a Event>,
    pub positions: Vec<usize>,
}

impl<'a> MatchedContext<'a> {
    /// Context where the matched events are exactly the span.
    pub fn contiguous(events: Vec<&'a Event>) -> Self {
        let positions = (0..events.len()).collect();
        Self { span: events, positions }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn event(&self, ctx: usize) -> Option<&'a Event> {
        self.positions.get(ctx).map(|&i| self.span[i])
    }

    fn failures_after(&self, ctx: usize, tool: &str) -> usize {
        let from = self.positions[ctx] + 1;
        self.span[from..]
            .iter()
            .filter(|e| e.tool_type == tool && !e.status.is_success())
            .count()
    }
}

/// Result of evaluating a mapping: one entry per binding, `None` = unbound.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    pub values: Vec<(String, Option<Value>)>,
    pub unmapped: Vec<String>,
}

impl Evaluation {
    /// Every binding resolved and no target argument left unmapped.
    pub fn is_complete(&self) -> bool {
        self.unmapped.is_empty() && self.values.iter().all(|(_, v)| v.is_some())
    }

    pub fn bound_count(&self) -> usize {
        self.values.iter().filter(|(_, v)| v.is_some()).count()
    }

    /// Bound arguments as a JSON object.
    pub fn to_args(&self) -> Value {
        let mut m = Map::new();
        for (k, v) in &self.values {
            if let Some(v) = v {
                m.insert(k.clone(), v.clone());
            }
        }
        Value::Object(m)
    }
}

pub fn evaluate_expr(expr: &MappingExpr, m: &MatchedContext<'_>) -> Result<Option<Value>, MappingError> {
    let event = |ctx: usize| {
        m.event(ctx).ok_or(MappingError::ContextOutOfRange { pos: ctx, len: m.len() })
    };
    Ok(match expr {
        MappingExpr::PathLookup(l) => {
            if l.path.is_empty() {
                return Err(MappingError::EmptyPath);
            }
            lookup(l.src.of(event(l.ctx)?), &l.path).cloned()
        }
        MappingExpr::IndexedFallback {
            ctx,
            src,
            prefix,
            start,
            suffix,
            counted_tool,
        } => {
            let e = event(*ctx)?;
            let idx = start + m.failures_after(*ctx, counted_tool);
            lookup(src.of(e), prefix)
                .and_then(|v| v.as_array())
                .and_then(|a| a.get(idx))
                .and_then(|v| lookup(v, suffix))
                .cloned()
        }
        MappingExpr::FormatTemplate { parts, normalize } => {
            let mut out = String::new();
            for part in parts {
                match part {
                    TemplatePart::Lit(s) => out.push_str(s),
                    TemplatePart::Hole(l) => {
                        if l.path.is_empty() {
                            return Err(MappingError::EmptyPath);
                        }
                        match lookup(l.src.of(event(l.ctx)?), &l.path).and_then(scalar_text) {
                            Some(s) => out.push_str(&normalize.apply(&s)),
                            None => return Ok(None),
                        }
                    }
                }
            }
            Some(Value::String(out))
        }
    })
}

pub(crate) fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Evaluates every binding against the matched context. Absent paths leave
/// the binding unbound; out-of-range context positions are structural errors.
pub fn evaluate(f: &ValueMapping, m: &MatchedContext<'_>) -> Result<Evaluation, MappingError> {
    let mut values = Vec::with_capacity(f.bindings.len());
    for b in &f.bindings {
        values.push((b.arg.clone(), evaluate_expr(&b.expr, m)?));
    }
    Ok(Evaluation {
        values,
        unmapped: f.unmapped.clone(),
    })
}

/// True when every binding resolves and equals the corresponding argument
/// of `actual` after canonicalization.
pub fn holds(f: &ValueMapping, m: &MatchedContext<'_>, actual: &Value) -> bool {
    match evaluate(f, m) {
        Ok(ev) => ev.values.iter().all(|(arg, v)| match (v, actual.get(arg)) {
            (Some(v), Some(a)) => crate::canonical::canonical_eq(v, a),
            _ => false,
        }),
        Err(_) => false,
    }
}

impl fmt::Display for Lookup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let src = match self.src {
            Source::Args => "Args",
            Source::Result => "Res",
        };
        write!(f, "Ctx{}{}", self.ctx, src)?;
        for step in &self.path {
            write!(f, "{step}")?;
        }
        Ok(())
    }
}

impl fmt::Display for MappingExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MappingExpr::PathLookup(l) => write!(f, "{l}"),
            MappingExpr::IndexedFallback {
                ctx,
                src,
                prefix,
                start,
                suffix,
                counted_tool,
            } => {
                let head = Lookup {
                    ctx: *ctx,
                    src: *src,
                    path: prefix.clone(),
                };
                write!(f, "{head}[{start} + failures({counted_tool})]")?;
                for step in suffix {
                    write!(f, "{step}")?;
                }
                Ok(())
            }
            MappingExpr::FormatTemplate { parts, normalize } => {
                let wrap = match normalize {
                    Normalization::None => None,
                    Normalization::Trim => Some("trim"),
                    Normalization::Lowercase => Some("lower"),
                };
                for (i, part) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    match (part, wrap) {
                        (TemplatePart::Lit(s), _) => {
                            f.write_str(&serde_json::to_string(s).map_err(|_| fmt::Error)?)?
                        }
                        (TemplatePart::Hole(l), Some(w)) => write!(f, "{w}({l})")?,
                        (TemplatePart::Hole(l), None) => write!(f, "{l}")?,
                    }
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for ValueMapping {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.bindings.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{} = {}", b.arg, b.expr)?;
        }
        Ok(())
    }
}
