//! Speculation eligibility policy: per-tool permission, graded speculation
//! depth, and arbitration of competing predictions.
//!
//! Policy files use this YAML layout:
//!
//! ```yaml
//! speculation_policy:
//!   default:
//!     allow: false
//!   tools:
//!     web_search:
//!       allow: true
//!       max_speculation: full
//!     pip_install:
//!       allow: true
//!       max_speculation: dry_run
//!   deduplication:
//!     strategy: max_expected_speculative_utility
//! ```

use crate::predictor::{PredictedArgs, PredictedInvocation};
use serde::{Deserialize, Serialize};
use serde_yaml::Value as Yaml;
use std::collections::BTreeMap;
use std::fmt;

/// Speculation depth, ordered by permissiveness: `WarmOnly < DryRun < Full`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeculationLevel {
    WarmOnly,
    DryRun,
    Full,
}

impl SpeculationLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            SpeculationLevel::WarmOnly => "warm_only",
            SpeculationLevel::DryRun => "dry_run",
            SpeculationLevel::Full => "full",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "warm_only" => Some(SpeculationLevel::WarmOnly),
            "dry_run" => Some(SpeculationLevel::DryRun),
            "full" => Some(SpeculationLevel::Full),
            _ => None,
        }
    }
}

impl fmt::Display for SpeculationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRule {
    pub allow: bool,
    pub max_speculation: SpeculationLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DedupStrategy {
    #[default]
    MaxExpectedSpeculativeUtility,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeculationPolicy {
    /// Rule for tools not listed in `tools`.
    pub default: ToolRule,
    pub tools: BTreeMap<String, ToolRule>,
    pub dedup: DedupStrategy,
}

impl Default for SpeculationPolicy {
    fn default() -> Self {
        Self::deny_all()
    }
}

impl SpeculationPolicy {
    pub fn deny_all() -> Self {
        Self {
            default: ToolRule {
                allow: false,
                max_speculation: SpeculationLevel::Full,
            },
            tools: BTreeMap::new(),
            dedup: DedupStrategy::default(),
        }
    }

    pub fn allow_all() -> Self {
        Self {
            default: ToolRule {
                allow: true,
                max_speculation: SpeculationLevel::Full,
            },
            ..Self::deny_all()
        }
    }

    pub fn with_tool(mut self, tool: impl Into<String>, allow: bool, max: SpeculationLevel) -> Self {
        self.tools.insert(
            tool.into(),
            ToolRule {
                allow,
                max_speculation: max,
            },
        );
        self
    }

    pub fn rule(&self, tool: &str) -> ToolRule {
        self.tools.get(tool).copied().unwrap_or(self.default)
    }

    /// Highest permitted depth, `None` when speculation is disallowed.
    pub fn max_level(&self, tool: &str) -> Option<SpeculationLevel> {
        let r = self.rule(tool);
        r.allow.then_some(r.max_speculation)
    }

    /// True when no tool can ever be speculated.
    pub fn denies_everything(&self) -> bool {
        !self.default.allow && self.tools.values().all(|r| !r.allow)
    }

    /// Effective policy in the file layout, defaults spelled out.
    pub fn to_yaml(&self) -> String {
        let mut s = String::from("speculation_policy:\n  default:\n");
        s.push_str(&format!("    allow: {}\n", self.default.allow));
        s.push_str(&format!("    max_speculation: {}\n", self.default.max_speculation));
        if self.tools.is_empty() {
            s.push_str("  tools: {}\n");
        } else {
            s.push_str("  tools:\n");
            for (name, r) in &self.tools {
                s.push_str(&format!(
                    "    {name}:\n      allow: {}\n      max_speculation: {}\n",
                    r.allow, r.max_speculation
                ));
            }
        }
        s.push_str("  deduplication:\n    strategy: max_expected_speculative_utility\n");
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {message}")]
pub struct PolicyError {
    /// Dotted key path of the offending node.
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedPolicy {
    pub policy: SpeculationPolicy,
    /// Unknown keys, reported with their paths.
    pub warnings: Vec<String>,
}

/// Parses a policy document. Missing sections take the conservative
/// defaults: no `default.allow` means deny, an allowed tool without
/// `max_speculation` may run at full depth.
pub fn parse_policy(text: &str) -> Result<ParsedPolicy, PolicyError> {
    let root: Yaml = serde_yaml::from_str(text).map_err(|e| PolicyError {
        path: "<document>".into(),
        message: e.to_string(),
    })?;
    let mut warnings = Vec::new();
    let mut policy = SpeculationPolicy::deny_all();
    let root = match root {
        Yaml::Null => return Ok(ParsedPolicy { policy, warnings }),
        Yaml::Mapping(m) => m,
        _ => return Err(err("<document>", "expected a mapping")),
    };
    let mut body = None;
    for (k, v) in root {
        let key = key_str(&k, "<document>")?;
        if key == "speculation_policy" {
            body = Some(v);
        } else {
            warnings.push(format!("unknown key {key}"));
        }
    }
    let body = match body {
        None | Some(Yaml::Null) => return Ok(ParsedPolicy { policy, warnings }),
        Some(Yaml::Mapping(m)) => m,
        Some(_) => return Err(err("speculation_policy", "expected a mapping")),
    };
    for (k, v) in body {
        let key = key_str(&k, "speculation_policy")?;
        let path = format!("speculation_policy.{key}");
        match key.as_str() {
            "default" => policy.default = parse_rule(&v, &path, &mut warnings)?,
            "tools" => match v {
                Yaml::Null => {}
                Yaml::Mapping(tools) => {
                    for (name, rule) in tools {
                        let name = key_str(&name, &path)?;
                        let rule_path = format!("{path}.{name}");
                        let rule = parse_rule(&rule, &rule_path, &mut warnings)?;
                        policy.tools.insert(name, rule);
                    }
                }
                _ => return Err(err(&path, "expected a mapping of tool rules")),
            },
            "deduplication" => match v {
                Yaml::Null => {}
                Yaml::Mapping(d) => {
                    for (dk, dv) in d {
                        let dk = key_str(&dk, &path)?;
                        let dpath = format!("{path}.{dk}");
                        if dk == "strategy" {
                            match dv.as_str() {
                                Some("max_expected_speculative_utility") => {
                                    policy.dedup = DedupStrategy::MaxExpectedSpeculativeUtility
                                }
                                _ => return Err(err(&dpath, "expected max_expected_speculative_utility")),
                            }
                        } else {
                            warnings.push(format!("unknown key {dpath}"));
                        }
                    }
                }
                _ => return Err(err(&path, "expected a mapping")),
            },
            _ => warnings.push(format!("unknown key {path}")),
        }
    }
    Ok(ParsedPolicy { policy, warnings })
}

fn err(path: &str, message: &str) -> PolicyError {
    PolicyError {
        path: path.to_string(),
        message: message.to_string(),
    }
}

fn key_str(k: &Yaml, parent: &str) -> Result<String, PolicyError> {
    match k {
        Yaml::String(s) => Ok(s.clone()),
        Yaml::Number(n) => Ok(n.to_string()),
        Yaml::Bool(b) => Ok(b.to_string()),
        _ => Err(err(parent, "keys must be scalars")),
    }
}

fn parse_rule(v: &Yaml, path: &str, warnings: &mut Vec<String>) -> Result<ToolRule, PolicyError> {
    let mut rule = ToolRule {
        allow: false,
        max_speculation: SpeculationLevel::Full,
    };
    let m = match v {
        Yaml::Null => return Ok(rule),
        Yaml::Mapping(m) => m,
        _ => return Err(err(path, "expected a mapping")),
    };
    for (k, v) in m {
        let key = key_str(k, path)?;
        let p = format!("{path}.{key}");
        match key.as_str() {
            "allow" => rule.allow = v.as_bool().ok_or_else(|| err(&p, "expected true or false"))?,
            "max_speculation" => {
                rule.max_speculation = v
                    .as_str()
                    .and_then(SpeculationLevel::parse)
                    .ok_or_else(|| err(&p, "expected one of full, dry_run, warm_only"))?
            }
            _ => warnings.push(format!("unknown key {p}")),
        }
    }
    Ok(rule)
}

/// A prediction cleared for speculative execution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeculativeAction {
    pub prediction: PredictedInvocation,
    pub level: SpeculationLevel,
    /// `p` times the estimated latency reduction at `level`.
    pub expected_utility: f64,
}

/// Depth a prediction can support on its own: only fully parameterized
/// invocations can run end to end.
pub fn implied_level(args: &PredictedArgs) -> SpeculationLevel {
    if args.is_full() {
        SpeculationLevel::Full
    } else {
        SpeculationLevel::WarmOnly
    }
}

/// Filters, grades, and deduplicates predictions.
///
/// `latency_reduction(prediction, level)` estimates the latency saved if
/// the speculation is consumed. At most one action per target tool
/// survives: highest expected utility, then higher `p`, then earlier
/// creation, then lower pattern id. Output is ordered by expected utility
/// descending, then tool name.
pub fn admit<F>(predictions: &[PredictedInvocation], policy: &SpeculationPolicy, latency_reduction: F) -> Vec<SpeculativeAction>
where
    F: Fn(&PredictedInvocation, SpeculationLevel) -> f64,
{
    let mut best: BTreeMap<&str, SpeculativeAction> = BTreeMap::new();
    for pred in predictions {
        let Some(cap) = policy.max_level(&pred.tool_type) else { continue };
        let level = cap.min(implied_level(&pred.args));
        let action = SpeculativeAction {
            prediction: pred.clone(),
            level,
            expected_utility: pred.probability * latency_reduction(pred, level),
        };
        match best.get(pred.tool_type.as_str()) {
            Some(cur) if !beats(&action, cur) => {}
            _ => {
                best.insert(&pred.tool_type, action);
            }
        }
    }
    let mut out: Vec<SpeculativeAction> = best.into_values().collect();
    out.sort_by(|a, b| {
        b.expected_utility
            .total_cmp(&a.expected_utility)
            .then_with(|| a.prediction.tool_type.cmp(&b.prediction.tool_type))
    });
    out
}

fn beats(a: &SpeculativeAction, b: &SpeculativeAction) -> bool {
    a.expected_utility
        .total_cmp(&b.expected_utility)
        .then(a.prediction.probability.total_cmp(&b.prediction.probability))
        .then(b.prediction.created_at.cmp(&a.prediction.created_at))
        .then(b.prediction.source_pattern.cmp(&a.prediction.source_pattern))
        .is_gt()
}

/// How an executor runs a speculative action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    /// End-to-end execution; the result may satisfy an authoritative call.
    Full,
    /// Prefetch and resolution only; no state is committed.
    DryRun,
    /// Runtime and environment initialization only.
    WarmUp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExecutorCaps {
    pub dry_run_supported: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutableAction {
    pub action: SpeculativeAction,
    pub mode: ExecMode,
    /// Results carry no committed effects and never satisfy authoritative calls.
    pub no_commit: bool,
    /// Dry run requested but unsupported, fell back to warm-up.
    pub downgraded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransformError {
    #[error("{tool}: full-depth actions need no transformation")]
    FullDepth { tool: String },
}

/// Rewrites a dry-run or warm-only action into its safe executable form.
pub fn transform_side_effecting(action: SpeculativeAction, caps: ExecutorCaps) -> Result<ExecutableAction, TransformError> {
    match action.level {
        SpeculationLevel::Full => Err(TransformError::FullDepth {
            tool: action.prediction.tool_type.clone(),
        }),
        SpeculationLevel::DryRun if caps.dry_run_supported => Ok(ExecutableAction {
            action,
            mode: ExecMode::DryRun,
            no_commit: true,
            downgraded: false,
        }),
        SpeculationLevel::DryRun => Ok(ExecutableAction {
            action,
            mode: ExecMode::WarmUp,
            no_commit: true,
            downgraded: true,
        }),
        SpeculationLevel::WarmOnly => Ok(ExecutableAction {
            action,
            mode: ExecMode::WarmUp,
            no_commit: true,
            downgraded: false,
        }),
    }
}

/// Executable form of any admitted action.
pub fn plan_execution(action: SpeculativeAction, caps: ExecutorCaps) -> ExecutableAction {
    if action.level == SpeculationLevel::Full {
        ExecutableAction {
            action,
            mode: ExecMode::Full,
            no_commit: false,
            downgraded: false,
        }
    } else {
        transform_side_effecting(action, caps).expect("non-full actions always transform")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    const FIGURE_POLICY: &str = "\
speculation_policy:
  default:
    allow: false

  tools:
    web_search:
      allow: true
      max_speculation: full

    pip_install:
      allow: true
      max_speculation: dry_run

  deduplication:
    strategy: max_expected_speculative_utility
";

    fn pred(tool: &str, p: f64, args: PredictedArgs) -> PredictedInvocation {
        PredictedInvocation {
            tool_type: tool.into(),
            args,
            probability: p,
            source_pattern: 0,
            created_at: 0,
        }
    }

    fn full(tool: &str, p: f64) -> PredictedInvocation {
        pred(tool, p, PredictedArgs::Full(json!({"arg0": "x"})))
    }

    #[test]
    fn figure_policy_parses() {
        let parsed = parse_policy(FIGURE_POLICY).unwrap();
        assert!(parsed.warnings.is_empty());
        let p = parsed.policy;
        assert!(!p.default.allow);
        assert_eq!(p.max_level("web_search"), Some(SpeculationLevel::Full));
        assert_eq!(p.max_level("pip_install"), Some(SpeculationLevel::DryRun));
        assert_eq!(p.max_level("rm_rf"), None);
        assert_eq!(p.dedup, DedupStrategy::MaxExpectedSpeculativeUtility);
    }

    #[test]
    fn empty_and_tools_only_documents_deny_by_default() {
        assert!(parse_policy("").unwrap().policy.denies_everything());
        let p = parse_policy("speculation_policy:\n  tools:\n    a:\n      allow: true\n").unwrap().policy;
        assert!(!p.default.allow);
        assert_eq!(p.max_level("a"), Some(SpeculationLevel::Full));
        assert_eq!(p.max_level("b"), None);
    }

    #[test]
    fn unknown_keys_warn() {
        let text = "speculation_policy:\n  default:\n    allow: true\n    colour: red\n  extra: 1\nother: 2\n";
        let parsed = parse_policy(text).unwrap();
        assert_eq!(parsed.warnings.len(), 3);
        assert!(parsed.warnings.iter().any(|w| w.contains("speculation_policy.default.colour")));
        assert!(parsed.policy.default.allow);
    }

    #[test]
    fn bad_enum_reports_path() {
        let text = "speculation_policy:\n  tools:\n    pip_install:\n      max_speculation: yolo\n";
        let e = parse_policy(text).unwrap_err();
        assert_eq!(e.path, "speculation_policy.tools.pip_install.max_speculation");
    }

    #[test]
    fn malformed_yaml_is_an_error() {
        assert!(parse_policy("speculation_policy: [unclosed").is_err());
        assert!(parse_policy("speculation_policy:\n  default:\n    allow: maybe\n").is_err());
        assert!(parse_policy("speculation_policy:\n  deduplication:\n    strategy: first\n").is_err());
    }

    #[test]
    fn echo_reparses_to_the_same_policy() {
        let p = parse_policy(FIGURE_POLICY).unwrap().policy;
        let again = parse_policy(&p.to_yaml()).unwrap();
        assert!(again.warnings.is_empty());
        assert_eq!(again.policy, p);
    }

    #[test]
    fn full_prediction_on_full_tool() {
        let p = parse_policy(FIGURE_POLICY).unwrap().policy;
        let actions = admit(&[full("web_search", 0.9)], &p, |_, _| 1.0);
        assert_eq!(actions.len(), 1);
        assert_eq!(actions[0].level, SpeculationLevel::Full);
    }

    #[test]
    fn side_effecting_tool_capped_at_dry_run() {
        let p = parse_policy(FIGURE_POLICY).unwrap().policy;
        let actions = admit(&[full("pip_install", 0.9)], &p, |_, _| 1.0);
        assert_eq!(actions[0].level, SpeculationLevel::DryRun);
    }

    #[test]
    fn partial_predictions_only_warm() {
        let p = SpeculationPolicy::allow_all();
        let preds = [
            pred("a", 0.9, PredictedArgs::Partial(json!({"x": 1}))),
            pred("b", 0.9, PredictedArgs::ToolOnly),
        ];
        let actions = admit(&preds, &p, |_, _| 1.0);
        assert!(actions.iter().all(|a| a.level == SpeculationLevel::WarmOnly));
    }

    #[test]
    fn disallowed_tools_dropped() {
        let actions = admit(&[full("x", 1.0)], &SpeculationPolicy::deny_all(), |_, _| 1.0);
        assert!(actions.is_empty());
    }

    #[test]
    fn keeps_highest_expected_utility_per_tool() {
        let mut a = full("Web_fetch", 0.9);
        a.source_pattern = 1;
        let mut b = full("Web_fetch", 0.8);
        b.source_pattern = 2;
        let t = |p: &PredictedInvocation, _: SpeculationLevel| if p.source_pattern == 1 { 10.0 } else { 20.0 };
        let actions = admit(&[a, b], &SpeculationPolicy::allow_all(), t);
        assert_eq!(actions.len(), 1);
        assert_eq!(actions[0].prediction.source_pattern, 2);
        assert!((actions[0].expected_utility - 16.0).abs() < 1e-12);
    }

    #[test]
    fn utility_ties_prefer_higher_p_then_earlier() {
        let mut a = full("t", 0.5);
        a.source_pattern = 1;
        let mut b = full("t", 1.0);
        b.source_pattern = 2;
        // equal utility 0.5 * 2 == 1.0 * 1
        let t = |p: &PredictedInvocation, _: SpeculationLevel| if p.source_pattern == 1 { 2.0 } else { 1.0 };
        let actions = admit(&[a.clone(), b], &SpeculationPolicy::allow_all(), t);
        assert_eq!(actions[0].prediction.source_pattern, 2);

        let mut c = a.clone();
        c.source_pattern = 3;
        c.created_at = 5;
        let actions = admit(&[c, a], &SpeculationPolicy::allow_all(), |_, _| 1.0);
        assert_eq!(actions[0].prediction.source_pattern, 1);
    }

    #[test]
    fn transforms() {
        let p = parse_policy(FIGURE_POLICY).unwrap().policy;
        let action = admit(&[full("pip_install", 0.9)], &p, |_, _| 1.0).remove(0);
        let dry = transform_side_effecting(action.clone(), ExecutorCaps { dry_run_supported: true }).unwrap();
        assert_eq!(dry.mode, ExecMode::DryRun);
        assert!(dry.no_commit && !dry.downgraded);
        let warm = transform_side_effecting(action, ExecutorCaps { dry_run_supported: false }).unwrap();
        assert_eq!(warm.mode, ExecMode::WarmUp);
        assert!(warm.no_commit && warm.downgraded);

        let full_action = admit(&[full("web_search", 0.9)], &p, |_, _| 1.0).remove(0);
        assert!(transform_side_effecting(full_action.clone(), ExecutorCaps::default()).is_err());
        let plan = plan_execution(full_action, ExecutorCaps::default());
        assert_eq!(plan.mode, ExecMode::Full);
        assert!(!plan.no_commit);
    }
}
