//! Built-in agent behaviour motifs with planted transition rates and value
//! dependencies.

use super::rng::{mix, unit};
use super::script::{AgentScript, ArgSource, Cond, RefSpec, Step};
use super::tools::LatencyModel;
use crate::event::{EventSignature, Millis, Status};
use crate::mapping::{ArgBinding, Lookup, MappingExpr, Normalization, PathStep, Source, TemplatePart, ValueMapping};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

fn edit_verify_rate() -> f64 {
    0.55
}
fn locate_examine_rate() -> f64 {
    0.38
}
fn visit_rate() -> f64 {
    0.51
}
fn url_dependency() -> f64 {
    0.95
}
fn batch_open_rate() -> f64 {
    0.9
}
fn batch_files() -> usize {
    3
}
fn min_visits() -> usize {
    3
}
fn max_visits() -> usize {
    4
}

pub const VERIFY_PREFIX: &str = "python -m pytest ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "motif", rename_all = "snake_case")]
pub enum Motif {
    /// `file_editor`, then `terminal` running the edited file after a
    /// successful edit with probability `verify_rate`.
    EditVerify {
        #[serde(default = "edit_verify_rate")]
        verify_rate: f64,
    },
    /// `grep`, then `file_editor` on the first match with probability `examine_rate`.
    LocateExamine {
        #[serde(default = "locate_examine_rate")]
        examine_rate: f64,
    },
    /// `search`, then with probability `visit_rate` a run of `web_fetch`
    /// calls over the ranked results. The first URL comes from the results
    /// with probability `url_dependency`.
    SearchVisit {
        #[serde(default = "visit_rate")]
        visit_rate: f64,
        #[serde(default = "url_dependency")]
        url_dependency: f64,
        #[serde(default = "min_visits")]
        min_visits: usize,
        #[serde(default = "max_visits")]
        max_visits: usize,
    },
    /// `grep`, then with probability `open_rate` a `file_viewer` call on each
    /// of the first `files` matches in order.
    BatchFetch {
        #[serde(default = "batch_open_rate")]
        open_rate: f64,
        #[serde(default = "batch_files")]
        files: usize,
    },
}

impl Motif {
    pub fn edit_verify() -> Self {
        Motif::EditVerify {
            verify_rate: edit_verify_rate(),
        }
    }

    pub fn locate_examine() -> Self {
        Motif::LocateExamine {
            examine_rate: locate_examine_rate(),
        }
    }

    pub fn search_visit() -> Self {
        Motif::SearchVisit {
            visit_rate: visit_rate(),
            url_dependency: url_dependency(),
            min_visits: min_visits(),
            max_visits: max_visits(),
        }
    }

    pub fn batch_fetch() -> Self {
        Motif::BatchFetch {
            open_rate: batch_open_rate(),
            files: batch_files(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Motif::EditVerify { .. } => "edit_verify",
            Motif::LocateExamine { .. } => "locate_examine",
            Motif::SearchVisit { .. } => "search_visit",
            Motif::BatchFetch { .. } => "batch_fetch",
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let rate = |name: &str, r: f64| {
            if (0.0..=1.0).contains(&r) {
                Ok(())
            } else {
                Err(format!("{name} {r} outside [0, 1]"))
            }
        };
        match *self {
            Motif::EditVerify { verify_rate } => rate("verify_rate", verify_rate),
            Motif::LocateExamine { examine_rate } => rate("examine_rate", examine_rate),
            Motif::SearchVisit {
                visit_rate,
                url_dependency,
                min_visits,
                max_visits,
            } => {
                rate("visit_rate", visit_rate)?;
                rate("url_dependency", url_dependency)?;
                if min_visits == 0 || min_visits > max_visits || max_visits > 5 {
                    return Err(format!("visits {min_visits}..={max_visits} must lie in 1..=5"));
                }
                Ok(())
            }
            Motif::BatchFetch { open_rate, files } => {
                rate("open_rate", open_rate)?;
                // The built-in grep returns three matches.
                if !(1..=3).contains(&files) {
                    return Err(format!("files {files} must lie in 1..=3"));
                }
                Ok(())
            }
        }
    }

    /// Steps of one instance starting at script index `base`.
    fn steps(&self, base: usize, think: &mut dyn FnMut() -> Millis) -> Vec<Step> {
        let lit = |v: &str| ArgSource::Fresh(v.to_string());
        let reference = |step: usize, src: Source, path: Vec<PathStep>, prefix: &str| {
            ArgSource::Ref(RefSpec {
                step,
                src,
                path,
                prefix: prefix.to_string(),
                suffix: String::new(),
                shift_failures: None,
            })
        };
        let key = |k: &str| PathStep::Key(k.to_string());
        let step = |think_ms, tool: &str, args: Vec<(&str, ArgSource)>, when, prob, label: Option<&str>| Step {
            think_ms,
            tool: tool.to_string(),
            args: args.into_iter().map(|(k, v)| (k.to_string(), v)).collect::<BTreeMap<_, _>>(),
            when,
            prob,
            label: label.map(str::to_string),
        };
        let after_success = Some(Cond {
            step: base,
            status: Some(Status::Success),
        });
        match *self {
            Motif::EditVerify { verify_rate } => vec![
                step(think(), "file_editor", vec![("path", lit("src/mod")), ("content", lit("patch"))], None, 1.0, None),
                step(
                    think(),
                    "terminal",
                    vec![("cmd", reference(base, Source::Args, vec![key("path")], VERIFY_PREFIX))],
                    after_success,
                    verify_rate,
                    Some("edit_verify"),
                ),
            ],
            Motif::LocateExamine { examine_rate } => vec![
                step(think(), "grep", vec![("pattern", lit("sym"))], None, 1.0, None),
                step(
                    think(),
                    "file_editor",
                    vec![
                        (
                            "path",
                            reference(base, Source::Result, vec![key("matches"), PathStep::Index(0), key("file")], ""),
                        ),
                        ("content", lit("patch")),
                    ],
                    after_success,
                    examine_rate,
                    Some("locate_examine"),
                ),
            ],
            Motif::SearchVisit {
                visit_rate,
                url_dependency,
                min_visits,
                max_visits,
            } => {
                let url = |i: usize| reference(base, Source::Result, vec![key("list"), PathStep::Index(i), key("url")], "");
                let mut out = vec![
                    step(think(), "search", vec![("query", lit("q"))], None, 1.0, None),
                    step(
                        think(),
                        "web_fetch",
                        vec![(
                            "url",
                            ArgSource::Either {
                                p: url_dependency,
                                primary: Box::new(url(0)),
                                alternate: Box::new(lit("https://elsewhere.example.org/p")),
                            },
                        )],
                        after_success,
                        visit_rate,
                        Some("search_visit"),
                    ),
                ];
                for j in 1..max_visits {
                    let prob = if j < min_visits { 1.0 } else { 0.5 };
                    out.push(step(
                        think(),
                        "web_fetch",
                        vec![("url", url(j))],
                        Some(Cond {
                            step: base + j,
                            status: None,
                        }),
                        prob,
                        Some("search_visit_next"),
                    ));
                }
                out
            }
            Motif::BatchFetch { open_rate, files } => {
                let file = |i: usize| reference(base, Source::Result, vec![key("matches"), PathStep::Index(i), key("file")], "");
                let mut out = vec![
                    step(think(), "grep", vec![("pattern", lit("trace"))], None, 1.0, None),
                    step(think(), "file_viewer", vec![("path", file(0))], after_success, open_rate, Some("batch_fetch")),
                ];
                for j in 1..files {
                    out.push(step(
                        think(),
                        "file_viewer",
                        vec![("path", file(j))],
                        Some(Cond {
                            step: base + j,
                            status: None,
                        }),
                        1.0,
                        Some("batch_fetch_next"),
                    ));
                }
                out
            }
        }
    }

    /// Transitions this motif plants, measured on corpora of this motif alone.
    pub fn planted(&self) -> Vec<Planted> {
        let lookup = |src: Source, path: Vec<PathStep>| Lookup { ctx: 0, src, path };
        let key = |k: &str| PathStep::Key(k.to_string());
        match *self {
            Motif::EditVerify { verify_rate } => vec![Planted {
                label: "edit_verify".into(),
                context: vec![EventSignature::success("file_editor")],
                target: "terminal".into(),
                rate: verify_rate,
                mapping: ValueMapping::single(
                    "cmd",
                    MappingExpr::FormatTemplate {
                        parts: vec![
                            TemplatePart::Lit(VERIFY_PREFIX.into()),
                            TemplatePart::Hole(lookup(Source::Args, vec![key("path")])),
                        ],
                        normalize: Normalization::None,
                    },
                ),
            }],
            Motif::LocateExamine { examine_rate } => vec![Planted {
                label: "locate_examine".into(),
                context: vec![EventSignature::success("grep")],
                target: "file_editor".into(),
                rate: examine_rate,
                mapping: ValueMapping {
                    bindings: vec![ArgBinding {
                        arg: "path".into(),
                        expr: MappingExpr::PathLookup(lookup(
                            Source::Result,
                            vec![key("matches"), PathStep::Index(0), key("file")],
                        )),
                    }],
                    unmapped: vec!["content".into()],
                },
            }],
            Motif::SearchVisit {
                visit_rate,
                url_dependency,
                ..
            } => {
                let url = |i: usize| {
                    MappingExpr::PathLookup(lookup(Source::Result, vec![key("list"), PathStep::Index(i), key("url")]))
                };
                vec![
                    Planted {
                        label: "search_visit".into(),
                        context: vec![EventSignature::success("search")],
                        target: "web_fetch".into(),
                        rate: visit_rate * url_dependency,
                        mapping: ValueMapping::single("url", url(0)),
                    },
                    Planted {
                        label: "search_visit_next".into(),
                        context: vec![EventSignature::success("search"), EventSignature::fail("web_fetch")],
                        target: "web_fetch".into(),
                        rate: 1.0,
                        mapping: ValueMapping::single("url", url(1)),
                    },
                ]
            }
            Motif::BatchFetch { open_rate, .. } => vec![Planted {
                label: "batch_fetch".into(),
                context: vec![EventSignature::success("grep")],
                target: "file_viewer".into(),
                rate: open_rate,
                mapping: ValueMapping::single(
                    "path",
                    MappingExpr::PathLookup(lookup(Source::Result, vec![key("matches"), PathStep::Index(0), key("file")])),
                ),
            }],
        }
    }
}

/// A planted `context -> target` transition with its generating mapping.
#[derive(Debug, Clone, PartialEq)]
pub struct Planted {
    pub label: String,
    pub context: Vec<EventSignature>,
    pub target: String,
    pub rate: f64,
    pub mapping: ValueMapping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedMotif {
    #[serde(flatten)]
    pub motif: Motif,
    #[serde(default = "unit_weight")]
    pub weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

fn default_think() -> LatencyModel {
    LatencyModel::Uniform {
        min_ms: 1_000,
        max_ms: 3_000,
    }
}

fn default_per_script() -> usize {
    4
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifMix {
    pub motifs: Vec<WeightedMotif>,
    #[serde(default = "default_per_script")]
    pub motifs_per_script: usize,
    #[serde(default = "default_think")]
    pub think: LatencyModel,
    #[serde(default)]
    pub final_think_ms: Millis,
    /// Ends every script with a `finish` call.
    #[serde(default = "default_true")]
    pub finish: bool,
}

impl MotifMix {
    pub fn new(motifs: Vec<(Motif, f64)>) -> Self {
        Self {
            motifs: motifs.into_iter().map(|(motif, weight)| WeightedMotif { motif, weight }).collect(),
            motifs_per_script: default_per_script(),
            think: default_think(),
            final_think_ms: 1_000,
            finish: true,
        }
    }

    pub fn single(m: Motif) -> Self {
        Self::new(vec![(m, 1.0)])
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.motifs.is_empty() {
            return Err("motif mix is empty".into());
        }
        if self.motifs.iter().any(|m| !m.weight.is_finite() || m.weight < 0.0) {
            return Err("motif weights must be finite and non-negative".into());
        }
        if self.motifs.iter().map(|m| m.weight).sum::<f64>() <= 0.0 {
            return Err("motif weights sum to zero".into());
        }
        self.motifs.iter().try_for_each(|m| m.motif.validate())
    }

    fn pick(&self, h: u64) -> &Motif {
        let total: f64 = self.motifs.iter().map(|m| m.weight).sum();
        let mut x = unit(h) * total;
        for m in &self.motifs {
            if x < m.weight {
                return &m.motif;
            }
            x -= m.weight;
        }
        &self.motifs.last().expect("validated non-empty").motif
    }

    /// Deterministic script `id` drawn from the mix.
    pub fn expand(&self, id: &str, seed: u64) -> AgentScript {
        let mut steps = Vec::new();
        let mut n: u64 = 0;
        let mut think = || {
            n += 1;
            self.think.sample(mix(seed, &[id.as_bytes(), b"think", &n.to_le_bytes()]))
        };
        for j in 0..self.motifs_per_script {
            let m = self.pick(mix(seed, &[id.as_bytes(), b"motif", &(j as u64).to_le_bytes()]));
            let base = steps.len();
            steps.extend(m.steps(base, &mut think));
        }
        if self.finish {
            steps.push(Step {
                think_ms: think(),
                tool: "finish".into(),
                args: BTreeMap::new(),
                when: None,
                prob: 1.0,
                label: None,
            });
        }
        AgentScript {
            id: id.to_string(),
            steps,
            final_think_ms: self.final_think_ms,
        }
    }
}
