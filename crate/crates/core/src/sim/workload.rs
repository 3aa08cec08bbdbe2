//! Workload files (JSON) and arrival traces (CSV `arrival_ms,script_id`).

use super::motif::MotifMix;
use super::rng::{mix, rng};
use super::script::{AgentScript, ArgSource, ScriptError};
use super::tools::{default_tools, ToolModel};
use crate::event::Millis;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub id: String,
    /// Built-in tool set when empty.
    #[serde(default)]
    pub tools: Vec<ToolModel>,
    #[serde(default)]
    pub scripts: Vec<AgentScript>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motif_mix: Option<MotifMix>,
    /// Scripts `motif-0 .. motif-{n-1}` expanded from `motif_mix`.
    #[serde(default)]
    pub motif_scripts: usize,
    /// Seed of the motif expansion.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("workload JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error("workload: {0}")]
    Invalid(String),
}

/// Validated workload with every script materialized.
#[derive(Debug, Clone)]
pub struct ResolvedWorkload {
    pub id: String,
    pub tools: BTreeMap<String, ToolModel>,
    pub scripts: BTreeMap<String, AgentScript>,
}

impl Workload {
    pub fn from_json(text: &str) -> Result<Self, WorkloadError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("workload serializes");
        s.push('\n');
        s
    }

    pub fn resolve(&self) -> Result<ResolvedWorkload, WorkloadError> {
        let invalid = |m: String| Err(WorkloadError::Invalid(m));
        let tools_src = if self.tools.is_empty() {
            default_tools()
        } else {
            self.tools.clone()
        };
        let mut tools = BTreeMap::new();
        for t in tools_src {
            if t.tool.is_empty() {
                return invalid("tool with empty name".into());
            }
            if !(0.0..=1.0).contains(&t.fail_rate) || !(0.0..=1.0).contains(&t.dry_run_fraction) {
                return invalid(format!("tool {}: rates must lie in [0, 1]", t.tool));
            }
            if t.cost == 0 {
                return invalid(format!("tool {}: cost must be positive", t.tool));
            }
            if tools.insert(t.tool.clone(), t.clone()).is_some() {
                return invalid(format!("duplicate tool {}", t.tool));
            }
        }
        let mut scripts = BTreeMap::new();
        for s in &self.scripts {
            if scripts.insert(s.id.clone(), s.clone()).is_some() {
                return invalid(format!("duplicate script {}", s.id));
            }
        }
        if let Some(mix_cfg) = &self.motif_mix {
            mix_cfg.validate().map_err(WorkloadError::Invalid)?;
            for i in 0..self.motif_scripts {
                let id = format!("motif-{i}");
                if scripts.contains_key(&id) {
                    return invalid(format!("duplicate script {id}"));
                }
                scripts.insert(id.clone(), mix_cfg.expand(&id, self.seed));
            }
        } else if self.motif_scripts > 0 {
            return invalid("motif_scripts set without motif_mix".into());
        }
        if scripts.is_empty() {
            return invalid("no scripts".into());
        }
        for s in scripts.values() {
            s.validate()?;
            for (i, st) in s.steps.iter().enumerate() {
                if !tools.contains_key(&st.tool) {
                    return invalid(format!("script {} step {i}: unknown tool {}", s.id, st.tool));
                }
                for a in st.args.values() {
                    check_either(a).map_err(WorkloadError::Invalid)?;
                }
            }
        }
        Ok(ResolvedWorkload {
            id: self.id.clone(),
            tools,
            scripts,
        })
    }
}

fn check_either(a: &ArgSource) -> Result<(), String> {
    if let ArgSource::Either { p, primary, alternate } = a {
        if !p.is_finite() {
            return Err("either p is not finite".into());
        }
        check_either(primary)?;
        check_either(alternate)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arrival {
    pub arrival_ms: Millis,
    pub script_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("arrivals line {line}: {message}")]
pub struct ArrivalError {
    pub line: u64,
    pub message: String,
}

/// Parses `arrival_ms,script_id` rows; a leading header row is optional.
pub fn parse_arrivals<R: Read>(reader: R) -> Result<Vec<Arrival>, ArrivalError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let mut out: Vec<Arrival> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ArrivalError {
            line: e.position().map_or(i as u64 + 1, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(i as u64 + 1, |p| p.line());
        let err = |message: String| ArrivalError { line, message };
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != 2 {
            return Err(err(format!("expected 2 fields, found {}", rec.len())));
        }
        if out.is_empty() && i == 0 && &rec[0] == "arrival_ms" {
            if &rec[1] != "script_id" {
                return Err(err(format!("unexpected header column {:?}", &rec[1])));
            }
            continue;
        }
        let arrival_ms: Millis = rec[0].parse().map_err(|_| err(format!("bad arrival_ms {:?}", &rec[0])))?;
        if rec[1].is_empty() {
            return Err(err("empty script_id".into()));
        }
        if let Some(prev) = out.last() {
            if arrival_ms < prev.arrival_ms {
                return Err(err(format!("arrival_ms {arrival_ms} decreases (previous {})", prev.arrival_ms)));
            }
        }
        out.push(Arrival {
            arrival_ms,
            script_id: rec[1].to_string(),
        });
    }
    Ok(out)
}

pub fn write_arrivals<W: Write>(arrivals: &[Arrival], w: W) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["arrival_ms", "script_id"])?;
    for a in arrivals {
        wr.write_record([a.arrival_ms.to_string(), a.script_id.clone()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Poisson arrivals with mean gap `mean_gap_ms`, cycling over `script_ids`
/// at random.
pub fn poisson_arrivals(n: usize, mean_gap_ms: f64, script_ids: &[String], seed: u64) -> Vec<Arrival> {
    assert!(!script_ids.is_empty(), "no scripts to schedule");
    let mut r = rng(mix(seed, &[b"arrivals"]));
    let exp = Exp::new(1.0 / mean_gap_ms.max(1e-9)).expect("positive rate");
    let mut t = 0.0f64;
    (0..n)
        .map(|i| {
            if i > 0 {
                t += exp.sample(&mut r);
            }
            let pick = mix(seed, &[b"arrival-script", &(i as u64).to_le_bytes()]) as usize % script_ids.len();
            Arrival {
                arrival_ms: t.round() as Millis,
                script_id: script_ids[pick].clone(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::motif::Motif;

    #[test]
    fn arrivals_parse_with_and_without_header() {
        let a = parse_arrivals("arrival_ms,script_id\n0,a\n10, b\n\n10,a\n".as_bytes()).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a[1].script_id, "b");
        let b = parse_arrivals("5,x\n".as_bytes()).unwrap();
        assert_eq!(b[0].arrival_ms, 5);
    }

    #[test]
    fn arrivals_reject_decreasing_and_garbage() {
        let e = parse_arrivals("10,a\n5,a\n".as_bytes()).unwrap_err();
        assert_eq!(e.line, 2);
        assert!(parse_arrivals("x,a\n".as_bytes()).is_err());
        assert!(parse_arrivals("1,a,b\n".as_bytes()).is_err());
        assert!(parse_arrivals("1,\n".as_bytes()).is_err());
    }

    #[test]
    fn arrivals_round_trip() {
        let ids = vec!["a".to_string(), "b".to_string()];
        let a = poisson_arrivals(50, 100.0, &ids, 3);
        assert!(a.windows(2).all(|w| w[0].arrival_ms <= w[1].arrival_ms));
        let mut buf = Vec::new();
        write_arrivals(&a, &mut buf).unwrap();
        assert_eq!(parse_arrivals(buf.as_slice()).unwrap(), a);
    }

    #[test]
    fn workload_resolves_motif_scripts() {
        let w = Workload {
            id: "w".into(),
            tools: vec![],
            scripts: vec![],
            motif_mix: Some(MotifMix::single(Motif::search_visit())),
            motif_scripts: 3,
            seed: 1,
        };
        let r = Workload::from_json(&w.to_json()).unwrap().resolve().unwrap();
        assert_eq!(r.scripts.len(), 3);
        assert!(r.tools.contains_key("web_fetch"));
    }

    #[test]
    fn workload_rejects_unknown_tools() {
        let text = r#"{"id":"w","tools":[{"tool":"a","latency":{"fixed":{"ms":1}},"result":"ack"}],
            "scripts":[{"id":"s","steps":[{"think_ms":1,"tool":"b"}]}]}"#;
        let e = Workload::from_json(text).unwrap().resolve().unwrap_err();
        assert!(e.to_string().contains("unknown tool b"));
        assert!(Workload::from_json("{").is_err());
    }
}
