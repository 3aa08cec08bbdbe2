//! Discrete-event testbed: tool latency models, scripted agents, synthetic
//! corpora with planted motifs, and a virtual-clock engine that drives the
//! predictor, policy and scheduler together.

pub mod corpus;
pub mod engine;
pub mod motif;
pub mod report;
pub mod rng;
pub mod script;
pub mod tools;
pub mod workload;

use serde::{Deserialize, Serialize};

pub use corpus::{generate_corpus, realize, Corpus, EventTruth};
pub use engine::{run, RunOutput, SimConfig, SimError, SpecRunRecord};
pub use motif::{Motif, MotifMix, Planted};
pub use report::{compare_runs, Comparison, RunReport};
pub use script::{AgentScript, ArgSource, Step};
pub use tools::{default_tools, LatencyModel, ResultKind, ToolModel};
pub use workload::{parse_arrivals, poisson_arrivals, write_arrivals, Arrival, ResolvedWorkload, Workload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// No prediction; every call runs on demand.
    Baseline,
    #[default]
    Speculative,
    /// Speculation runs but its results are never served.
    Shadow,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Speculative => "speculative",
            Mode::Shadow => "shadow",
        }
    }
}
