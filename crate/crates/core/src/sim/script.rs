//! Scripted agents: think durations, tool calls, and argument generators
//! that depend only on the run seed and the request's own history.

use super::rng::{hex8, mix, unit};
use crate::event::{Millis, Status};
use crate::mapping::{lookup, PathStep, Source};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefSpec {
    /// Script step whose payload is read.
    pub step: usize,
    pub src: Source,
    pub path: Vec<PathStep>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub prefix: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub suffix: String,
    /// Adds to the last index step the number of failed calls of this tool
    /// executed after `step`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_failures: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgSource {
    Literal(Value),
    /// Unique per request and step: `<prefix>-<hex>`.
    Fresh(String),
    Ref(RefSpec),
    Either {
        p: f64,
        primary: Box<ArgSource>,
        alternate: Box<ArgSource>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cond {
    pub step: usize,
    /// Required status of `step`; any status when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<Status>,
}

fn one() -> f64 {
    1.0
}

fn is_one(p: &f64) -> bool {
    *p == 1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub think_ms: Millis,
    pub tool: String,
    #[serde(default)]
    pub args: BTreeMap<String, ArgSource>,
    /// The step runs only if `when` holds and the gate draw is below `prob`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub when: Option<Cond>,
    #[serde(default = "one", skip_serializing_if = "is_one")]
    pub prob: f64,
    /// Labels a planted transition for ground truth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentScript {
    pub id: String,
    pub steps: Vec<Step>,
    /// Think after the last tool call before the request finishes.
    #[serde(default)]
    pub final_think_ms: Millis,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub tool: String,
    pub args: Value,
    pub status: Status,
    pub result: Value,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("script {script} step {step}: {message}")]
pub struct ScriptError {
    pub script: String,
    pub step: usize,
    pub message: String,
}

impl AgentScript {
    pub fn validate(&self) -> Result<(), ScriptError> {
        let err = |step: usize, message: String| ScriptError {
            script: self.id.clone(),
            step,
            message,
        };
        for (i, s) in self.steps.iter().enumerate() {
            if s.tool.is_empty() {
                return Err(err(i, "empty tool".into()));
            }
            if !(0.0..=1.0).contains(&s.prob) {
                return Err(err(i, format!("prob {} outside [0, 1]", s.prob)));
            }
            if let Some(c) = s.when {
                if c.step >= i {
                    return Err(err(i, format!("condition on later step {}", c.step)));
                }
            }
            for (name, a) in &s.args {
                check_source(a, i).map_err(|m| err(i, format!("arg {name}: {m}")))?;
            }
        }
        Ok(())
    }
}

fn check_source(a: &ArgSource, at: usize) -> Result<(), String> {
    match a {
        ArgSource::Ref(r) if r.step >= at => Err(format!("reference to step {} not before {at}", r.step)),
        ArgSource::Either { p, primary, alternate } => {
            if !(0.0..=1.0).contains(p) {
                return Err(format!("either p {p} outside [0, 1]"));
            }
            check_source(primary, at)?;
            check_source(alternate, at)
        }
        _ => Ok(()),
    }
}

/// Per-request replay context.
#[derive(Debug, Clone, Copy)]
pub struct Replay<'a> {
    pub seed: u64,
    /// Distinguishes requests replaying the same script.
    pub instance: &'a str,
}

impl Replay<'_> {
    fn draw(&self, label: &[u8], step: usize, extra: &[u8]) -> u64 {
        mix(self.seed, &[self.instance.as_bytes(), label, &(step as u64).to_le_bytes(), extra])
    }

    /// First step at or after `from` whose gate passes.
    pub fn next_step(&self, script: &AgentScript, from: usize, history: &[Option<CallRecord>]) -> Option<usize> {
        (from..script.steps.len()).find(|&i| self.gate(script, i, history))
    }

    fn gate(&self, script: &AgentScript, i: usize, history: &[Option<CallRecord>]) -> bool {
        let s = &script.steps[i];
        if let Some(c) = s.when {
            match history.get(c.step).and_then(|h| h.as_ref()) {
                None => return false,
                Some(rec) => {
                    if c.status.is_some_and(|st| st != rec.status) {
                        return false;
                    }
                }
            }
        }
        s.prob >= 1.0 || unit(self.draw(b"gate", i, &[])) < s.prob
    }

    pub fn resolve_args(&self, script: &AgentScript, i: usize, history: &[Option<CallRecord>]) -> Value {
        let mut m = Map::new();
        for (name, src) in &script.steps[i].args {
            m.insert(name.clone(), self.resolve(src, i, name, history));
        }
        Value::Object(m)
    }

    fn resolve(&self, src: &ArgSource, i: usize, name: &str, history: &[Option<CallRecord>]) -> Value {
        match src {
            ArgSource::Literal(v) => v.clone(),
            ArgSource::Fresh(prefix) => {
                Value::String(format!("{prefix}-{}", hex8(self.draw(b"fresh", i, name.as_bytes()))))
            }
            ArgSource::Either { p, primary, alternate } => {
                let pick = unit(self.draw(b"either", i, name.as_bytes())) < *p;
                self.resolve(if pick { primary } else { alternate }, i, name, history)
            }
            ArgSource::Ref(r) => resolve_ref(r, history).unwrap_or(Value::Null),
        }
    }
}

fn resolve_ref(r: &RefSpec, history: &[Option<CallRecord>]) -> Option<Value> {
    let rec = history.get(r.step)?.as_ref()?;
    let root = match r.src {
        Source::Args => &rec.args,
        Source::Result => &rec.result,
    };
    let mut path = r.path.clone();
    if let Some(tool) = &r.shift_failures {
        let fails = history[r.step + 1..]
            .iter()
            .flatten()
            .filter(|c| &c.tool == tool && c.status == Status::Fail)
            .count();
        if let Some(PathStep::Index(i)) = path.iter_mut().rev().find(|s| matches!(s, PathStep::Index(_))) {
            *i += fails;
        }
    }
    let v = lookup(root, &path)?;
    if r.prefix.is_empty() && r.suffix.is_empty() {
        return Some(v.clone());
    }
    let text = match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    Some(Value::String(format!("{}{}{}", r.prefix, text, r.suffix)))
}
