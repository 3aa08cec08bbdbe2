//! Latency and result models of simulated tools.

use super::rng::{hex8, mix, rng, unit};
use crate::canonical::canonical_arg_hash;
use crate::event::{Millis, Status};
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyModel {
    Fixed { ms: Millis },
    Uniform { min_ms: Millis, max_ms: Millis },
    Lognormal { median_ms: f64, sigma: f64 },
}

impl LatencyModel {
    pub fn sample(&self, h: u64) -> Millis {
        match *self {
            LatencyModel::Fixed { ms } => ms,
            LatencyModel::Uniform { min_ms, max_ms } => {
                let (lo, hi) = (min_ms.min(max_ms), min_ms.max(max_ms));
                lo + (unit(h) * (hi - lo + 1) as f64) as Millis
            }
            LatencyModel::Lognormal { median_ms, sigma } => {
                let mu = median_ms.max(1e-9).ln();
                match LogNormal::new(mu, sigma.max(0.0)) {
                    Ok(d) => d.sample(&mut rng(h)).round().max(0.0) as Millis,
                    Err(_) => median_ms.max(0.0).round() as Millis,
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            LatencyModel::Fixed { ms } => ms as f64,
            LatencyModel::Uniform { min_ms, max_ms } => (min_ms + max_ms) as f64 / 2.0,
            LatencyModel::Lognormal { median_ms, sigma } => median_ms * (sigma * sigma / 2.0).exp(),
        }
    }
}

/// Shape of a successful result payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultKind {
    /// `{"query", "list": [{"url", "title"}]}`.
    SearchList { n: usize },
    /// `{"url", "content"}`.
    Page,
    /// `{"matches": [{"file", "line"}]}`.
    Matches { n: usize },
    /// `{"path", "text"}`.
    FileText,
    /// `{"path", "written", "revision"}`; revision counts committed writes.
    WriteAck,
    /// `{"exit_code", "stdout"}`.
    Command,
    /// `{"ok": true}`.
    Ack,
    Static { value: Value },
}

fn default_cost() -> u32 {
    1
}

fn default_dry_fraction() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolModel {
    pub tool: String,
    pub latency: LatencyModel,
    #[serde(default)]
    pub init_overhead_ms: Millis,
    #[serde(default)]
    pub side_effecting: bool,
    #[serde(default)]
    pub dry_run_supported: bool,
    #[serde(default)]
    pub fail_rate: f64,
    pub result: ResultKind,
    #[serde(default = "default_cost")]
    pub cost: u32,
    /// Share of execution time a completed dry run removes from the real run.
    #[serde(default = "default_dry_fraction")]
    pub dry_run_fraction: f64,
}

impl ToolModel {
    pub fn new(tool: &str, latency: LatencyModel, result: ResultKind) -> Self {
        Self {
            tool: tool.to_string(),
            latency,
            init_overhead_ms: 0,
            side_effecting: false,
            dry_run_supported: false,
            fail_rate: 0.0,
            result,
            cost: 1,
            dry_run_fraction: 0.5,
        }
    }

    fn key(&self, seed: u64, args: &Value, label: &[u8]) -> u64 {
        let h = canonical_arg_hash(args).0.to_le_bytes();
        mix(seed, &[self.tool.as_bytes(), &h, label])
    }

    /// Execution part of a full run (excluding initialization).
    pub fn exec_ms(&self, seed: u64, args: &Value) -> Millis {
        self.latency.sample(self.key(seed, args, b"latency"))
    }

    pub fn full_ms(&self, seed: u64, args: &Value) -> Millis {
        self.init_overhead_ms + self.exec_ms(seed, args)
    }

    pub fn mean_full_ms(&self) -> f64 {
        self.init_overhead_ms as f64 + self.latency.mean()
    }

    pub fn fails(&self, seed: u64, args: &Value) -> bool {
        self.fail_rate > 0.0 && unit(self.key(seed, args, b"fail")) < self.fail_rate
    }

    /// Deterministic outcome; `revision` is the number of earlier committed
    /// executions of this tool in the calling session.
    pub fn outcome(&self, seed: u64, args: &Value, revision: u64) -> (Status, Value) {
        if self.fails(seed, args) {
            return (Status::Fail, json!({ "error": "tool failure", "tool": self.tool }));
        }
        let h = self.key(seed, args, b"result");
        let arg = |k: &str| args.get(k).cloned().unwrap_or(Value::Null);
        let v = match &self.result {
            ResultKind::SearchList { n } => {
                let list: Vec<Value> = (0..*n)
                    .map(|i| {
                        let site = hex8(mix(h, &[&(i as u64).to_le_bytes()]));
                        json!({
                            "url": format!("https://{site}.example.com/r/{i}"),
                            "title": format!("result {i} {site}"),
                        })
                    })
                    .collect();
                json!({ "query": arg("query"), "list": list })
            }
            ResultKind::Page => json!({ "url": arg("url"), "content": format!("page-{}", hex8(h)) }),
            ResultKind::Matches { n } => {
                let matches: Vec<Value> = (0..*n)
                    .map(|i| {
                        let f = hex8(mix(h, &[&(i as u64).to_le_bytes()]));
                        json!({ "file": format!("src/m{f}.py"), "line": 1 + (mix(h, &[b"line", &[i as u8]]) % 400) })
                    })
                    .collect();
                json!({ "matches": matches })
            }
            ResultKind::FileText => json!({ "path": arg("path"), "text": format!("text-{}", hex8(h)) }),
            ResultKind::WriteAck => json!({ "path": arg("path"), "written": true, "revision": revision }),
            ResultKind::Command => json!({ "exit_code": 0, "stdout": format!("ok {}", hex8(h)) }),
            ResultKind::Ack => json!({ "ok": true }),
            ResultKind::Static { value } => value.clone(),
        };
        (Status::Success, v)
    }
}

/// Tool set used by the built-in motifs.
pub fn default_tools() -> Vec<ToolModel> {
    let ms = |median: f64| LatencyModel::Lognormal {
        median_ms: median,
        sigma: 0.25,
    };
    let mut search = ToolModel::new("search", ms(1_500.0), ResultKind::SearchList { n: 5 });
    search.init_overhead_ms = 100;
    let mut fetch = ToolModel::new("web_fetch", ms(2_000.0), ResultKind::Page);
    fetch.init_overhead_ms = 200;
    fetch.fail_rate = 0.1;
    let mut editor = ToolModel::new("file_editor", ms(400.0), ResultKind::WriteAck);
    editor.side_effecting = true;
    editor.fail_rate = 0.05;
    let mut terminal = ToolModel::new("terminal", ms(3_000.0), ResultKind::Command);
    terminal.init_overhead_ms = 500;
    let grep = ToolModel::new("grep", ms(600.0), ResultKind::Matches { n: 3 });
    let mut viewer = ToolModel::new("file_viewer", ms(800.0), ResultKind::FileText);
    viewer.init_overhead_ms = 100;
    let finish = ToolModel::new("finish", LatencyModel::Fixed { ms: 50 }, ResultKind::Ack);
    vec![search, fetch, editor, terminal, grep, viewer, finish]
}
