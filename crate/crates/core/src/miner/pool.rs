//! Pattern-pool JSON file.
//!
//! ```json
//! {"version": 1,
//!  "config": {"k": 3, "sigma": 5, "tau": 0.5, "match_mode": "embedded"},
//!  "patterns": [{"context": [{"tool": "Search", "status": "success"}],
//!                "target": "Web_fetch",
//!                "mapping": "arg0 = SearchRes[\"list\"][0][\"url\"]",
//!                "p": 0.9, "support": 120}]}
//! ```
//!
//! `mapping` is `null`, the compact JSON form, or a mapping alias string.

use super::{MiningConfig, PatternTuple};
use crate::event::EventSignature;
use crate::mapping::{parse_alias, ValueMapping};
use crate::matching::MatchMode;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const POOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub k: usize,
    pub sigma: usize,
    pub tau: f64,
    #[serde(default)]
    pub match_mode: MatchMode,
}

impl From<&MiningConfig> for PoolConfig {
    fn from(c: &MiningConfig) -> Self {
        Self {
            k: c.k,
            sigma: c.sigma,
            tau: c.tau,
            match_mode: c.match_mode,
        }
    }
}

impl Default for PoolConfig {
    fn default() -> Self {
        (&MiningConfig::default()).into()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatternPool {
    pub config: PoolConfig,
    pub patterns: Vec<PatternTuple>,
}

impl PatternPool {
    pub fn new(config: PoolConfig, patterns: Vec<PatternTuple>) -> Self {
        Self { config, patterns }
    }

    pub fn empty() -> Self {
        Self::new(PoolConfig::default(), Vec::new())
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn to_json(&self) -> String {
        let file = PoolFile {
            version: POOL_VERSION,
            config: self.config,
            patterns: self
                .patterns
                .iter()
                .map(|p| PatternRecord {
                    context: p.context.clone(),
                    target: p.target.clone(),
                    mapping: p.mapping.clone().map(MappingRepr::Compact),
                    p: p.p,
                    support: p.support,
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("pool serialization is infallible");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, PoolError> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| PoolError::Json(e.to_string()))?;
        let version = raw.get("version").and_then(|v| v.as_u64());
        if version != Some(POOL_VERSION as u64) {
            return Err(PoolError::Version(raw.get("version").cloned().unwrap_or_default().to_string()));
        }
        let file: PoolFile = serde_json::from_value(raw).map_err(|e| PoolError::Json(e.to_string()))?;
        let mut patterns = Vec::with_capacity(file.patterns.len());
        for (index, rec) in file.patterns.into_iter().enumerate() {
            let invalid = |reason: String| PoolError::Invalid { index, reason };
            if rec.context.is_empty() {
                return Err(invalid("empty context".into()));
            }
            if rec.target.is_empty() {
                return Err(invalid("empty target".into()));
            }
            if !(rec.p > 0.0 && rec.p <= 1.0) {
                return Err(invalid(format!("p = {} outside (0, 1]", rec.p)));
            }
            let mapping = match rec.mapping {
                None => None,
                Some(MappingRepr::Compact(m)) => Some(m),
                Some(MappingRepr::Alias(text)) => {
                    Some(parse_alias(&text, &rec.context).map_err(|e| invalid(e.to_string()))?)
                }
            };
            if let Some(m) = &mapping {
                m.check(rec.context.len()).map_err(|e| invalid(e.to_string()))?;
            }
            patterns.push(PatternTuple {
                context: rec.context,
                target: rec.target,
                mapping,
                p: rec.p,
                support: rec.support,
            });
        }
        Ok(Self {
            config: file.config,
            patterns,
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PoolError {
    #[error("pool I/O: {0}")]
    Io(String),
    #[error("malformed pool JSON: {0}")]
    Json(String),
    #[error("unsupported pool version {0}, expected {POOL_VERSION}")]
    Version(String),
    #[error("pattern {index}: {reason}")]
    Invalid { index: usize, reason: String },
}

#[derive(Serialize, Deserialize)]
struct PoolFile {
    version: u32,
    config: PoolConfig,
    patterns: Vec<PatternRecord>,
}

#[derive(Serialize, Deserialize)]
struct PatternRecord {
    context: Vec<EventSignature>,
    target: String,
    #[serde(default)]
    mapping: Option<MappingRepr>,
    p: f64,
    #[serde(default)]
    support: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MappingRepr {
    Alias(String),
    Compact(ValueMapping),
}

pub fn save_pool(pool: &PatternPool, path: &Path) -> Result<(), PoolError> {
    std::fs::write(path, pool.to_json()).map_err(|e| PoolError::Io(format!("{}: {e}", path.display())))
}

pub fn load_pool(path: &Path) -> Result<PatternPool, PoolError> {
    let text = std::fs::read_to_string(path).map_err(|e| PoolError::Io(format!("{}: {e}", path.display())))?;
    PatternPool::from_json(&text)
}
