use crate::{Command, MatchArg, ModeArg, MotifArg};
use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use serde_json::json;
use spectool_core::ingest::{ingest_trace, IngestConfig, IngestReport};
use spectool_core::matching::MatchMode;
use spectool_core::miner::{load_pool, mine, save_pool, MiningConfig, PatternPool};
use spectool_core::policy::{parse_policy, SpeculationLevel, SpeculationPolicy};
use spectool_core::predictor::{score_accuracy, ScoreOptions};
use spectool_core::scheduler::{LogLevel, LogRecord};
use spectool_core::sim::{
    compare_runs, default_tools, generate_corpus, parse_arrivals, poisson_arrivals, run, write_arrivals, Mode,
    Motif, MotifMix, ResolvedWorkload, RunOutput, SimConfig, SimError, Workload,
};
use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

pub enum Failure {
    Usage(anyhow::Error),
    Invariant(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

pub fn dispatch(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Mine {
            trace,
            out,
            k,
            sigma,
            tau,
            match_mode,
            gap_s,
            summary,
        } => {
            let cfg = MiningConfig {
                k,
                sigma,
                tau,
                match_mode: match match_mode {
                    MatchArg::Embedded => MatchMode::Embedded,
                    MatchArg::Contiguous => MatchMode::Contiguous,
                },
                ..MiningConfig::default()
            };
            Ok(cmd_mine(&trace, &out, &cfg, gap_s, summary.as_deref())?)
        }
        Command::Score {
            pool,
            trace,
            policy,
            window,
            gap_s,
            out,
        } => Ok(cmd_score(&pool, &trace, policy.as_deref(), window, gap_s, out.as_deref())?),
        Command::Simulate {
            workload,
            arrivals,
            pool,
            policy,
            resources,
            epoch_ms,
            seed,
            mode,
            max_candidates,
            out,
        } => cmd_simulate(&SimulateArgs {
            workload: &workload,
            arrivals: &arrivals,
            pool: pool.as_deref(),
            policy: policy.as_deref(),
            resources: &resources,
            epoch_ms,
            seed,
            mode,
            max_candidates,
            out: &out,
        }),
        Command::CheckPolicy { policy } => Ok(cmd_check_policy(&policy)?),
        Command::GenCorpus {
            motif,
            sessions,
            seed,
            out,
        } => Ok(cmd_gen_corpus(motif, sessions, seed, &out)?),
        Command::GenArrivals {
            workload,
            requests,
            mean_gap_ms,
            seed,
            out,
        } => Ok(cmd_gen_arrivals(&workload, requests, mean_gap_ms, seed, &out)?),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn load_trace(path: &Path, gap_s: u64) -> Result<IngestReport> {
    let f = File::open(path).with_context(|| format!("opening trace {}", path.display()))?;
    let cfg = IngestConfig {
        inactivity_threshold_ms: gap_s.saturating_mul(1000),
    };
    let report = ingest_trace(BufReader::new(f), &cfg).with_context(|| format!("reading trace {}", path.display()))?;
    for e in report.errors.iter().take(5) {
        eprintln!("warning: {}:{}: {}", path.display(), e.line, e.message);
    }
    if report.errors.len() > 5 {
        eprintln!("warning: {} malformed lines in total", report.errors.len());
    }
    Ok(report)
}

/// Counts per bucket label, in bucket order.
fn histogram(values: impl Iterator<Item = f64>, edges: &[f64]) -> Vec<serde_json::Value> {
    let mut counts = vec![0usize; edges.len()];
    for v in values {
        let i = edges.iter().rposition(|&e| v >= e).unwrap_or(0);
        counts[i] += 1;
    }
    edges
        .iter()
        .enumerate()
        .map(|(i, lo)| {
            let hi = edges.get(i + 1).map_or(json!(null), |h| json!(h));
            json!({ "from": lo, "to": hi, "count": counts[i] })
        })
        .collect()
}

fn cmd_mine(trace: &Path, out: &Path, cfg: &MiningConfig, gap_s: u64, summary: Option<&Path>) -> Result<()> {
    cfg.validate().map_err(|e| anyhow!("mining config: {e}"))?;
    let report = load_trace(trace, gap_s)?;
    let patterns = mine(&report.sessions, cfg);
    let pool = PatternPool::new(cfg.into(), patterns);
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    save_pool(&pool, out).with_context(|| format!("writing pool {}", out.display()))?;
    let conf_edges: Vec<f64> = (0..10).map(|i| f64::from(i) / 10.0).collect();
    let support_edges = [0.0, 5.0, 10.0, 50.0, 100.0, 500.0, 1000.0, 5000.0];
    let s = json!({
        "sessions": report.sessions.len(),
        "events": report.event_count(),
        "malformed_lines": report.errors.len(),
        "patterns": pool.len(),
        "with_mapping": pool.patterns.iter().filter(|p| p.mapping.is_some()).count(),
        "confidence_histogram": histogram(pool.patterns.iter().map(|p| p.p), &conf_edges),
        "support_histogram": histogram(pool.patterns.iter().map(|p| p.support as f64), &support_edges),
    });
    let text = pretty(&s);
    if let Some(path) = summary {
        write_text(path, &text)?;
    }
    print!("{text}");
    Ok(())
}

fn load_policy(path: &Path) -> Result<SpeculationPolicy> {
    let parsed = parse_policy(&read_text(path)?).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    for w in &parsed.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(parsed.policy)
}

fn cmd_score(
    pool: &Path,
    trace: &Path,
    policy: Option<&Path>,
    window: Option<usize>,
    gap_s: u64,
    out: Option<&Path>,
) -> Result<()> {
    let pool = load_pool(pool).with_context(|| format!("loading pool {}", pool.display()))?;
    let report = load_trace(trace, gap_s)?;
    let trace_tools: BTreeSet<&str> = report
        .sessions
        .iter()
        .flat_map(|s| s.tool_calls().map(|e| e.tool_type.as_str()))
        .collect();
    let pool_tools: BTreeSet<&str> = pool
        .patterns
        .iter()
        .flat_map(|p| p.context.iter().map(|c| c.tool_type.as_str()).chain([p.target.as_str()]))
        .collect();
    let missing: Vec<&str> = pool_tools.difference(&trace_tools).copied().collect();
    if !missing.is_empty() {
        eprintln!("warning: pool references tools absent from the trace: {}", missing.join(", "));
    }
    let opts = ScoreOptions {
        window,
        policy: policy.map(load_policy).transpose()?,
    };
    let acc = score_accuracy(&report.sessions, &pool, &opts);
    let text = pretty(&acc);
    if let Some(path) = out {
        write_text(path, &text)?;
    }
    print!("{text}");
    Ok(())
}

struct SimulateArgs<'a> {
    workload: &'a Path,
    arrivals: &'a Path,
    pool: Option<&'a Path>,
    policy: Option<&'a Path>,
    resources: &'a str,
    epoch_ms: u64,
    seed: u64,
    mode: ModeArg,
    max_candidates: Option<usize>,
    out: &'a Path,
}

fn parse_resources(s: &str) -> Result<(u32, u32)> {
    let (r, b) = s
        .split_once(',')
        .ok_or_else(|| anyhow!("--resources expects R,B, got {s:?}"))?;
    let r: u32 = r.trim().parse().with_context(|| format!("bad R in --resources {s:?}"))?;
    let b: u32 = b.trim().parse().with_context(|| format!("bad B in --resources {s:?}"))?;
    if r == 0 {
        bail!("--resources: R must be positive");
    }
    Ok((r, b))
}

/// Default policy: everything allowed, side-effecting tools capped at dry runs.
fn default_policy(w: &ResolvedWorkload) -> SpeculationPolicy {
    w.tools
        .values()
        .filter(|t| t.side_effecting)
        .fold(SpeculationPolicy::allow_all(), |p, t| p.with_tool(&t.tool, true, SpeculationLevel::DryRun))
}

fn log_level() -> Result<LogLevel> {
    match std::env::var("SPECTOOL_LOG") {
        Ok(v) => v.parse().map_err(|e| anyhow!("SPECTOOL_LOG: {e}")),
        Err(_) => Ok(LogLevel::default()),
    }
}

fn write_log(path: &Path, log: &[LogRecord]) -> Result<()> {
    let f = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    let mut w = BufWriter::new(f);
    for r in log {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let workload = Workload::from_json(&read_text(a.workload)?)
        .and_then(|w| w.resolve())
        .map_err(|e| anyhow!("{}: {e}", a.workload.display()))?;
    let arrivals = parse_arrivals(File::open(a.arrivals).with_context(|| format!("opening {}", a.arrivals.display()))?)
        .map_err(|e| anyhow!("{}: {e}", a.arrivals.display()))?;
    if let Some(bad) = arrivals.iter().find(|x| !workload.scripts.contains_key(&x.script_id)) {
        return Err(anyhow!("{}: unknown script {}", a.arrivals.display(), bad.script_id).into());
    }
    let pool = match a.pool {
        Some(p) => load_pool(p).with_context(|| format!("loading pool {}", p.display()))?,
        None => PatternPool::empty(),
    };
    if let Some(t) = pool
        .patterns
        .iter()
        .flat_map(|p| p.context.iter().map(|c| &c.tool_type).chain([&p.target]))
        .find(|t| !workload.tools.contains_key(*t))
    {
        eprintln!("warning: pool references tool {t} unknown to the workload");
    }
    let policy = match a.policy {
        Some(p) => load_policy(p)?,
        None => default_policy(&workload),
    };
    let (total, budget) = parse_resources(a.resources)?;
    let mut cfg = SimConfig {
        seed: a.seed,
        max_candidates: a.max_candidates,
        ..SimConfig::default()
    };
    cfg.scheduler.total = total;
    cfg.scheduler.budget = budget;
    cfg.scheduler.epoch_ms = a.epoch_ms;
    cfg.scheduler.log_level = log_level()?;
    let modes: &[Mode] = match a.mode {
        ModeArg::Baseline => &[Mode::Baseline],
        ModeArg::Spec => &[Mode::Speculative],
        ModeArg::Shadow => &[Mode::Shadow],
        ModeArg::Both => &[Mode::Baseline, Mode::Speculative],
    };
    fs::create_dir_all(a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut outputs: Vec<RunOutput> = Vec::new();
    for &mode in modes {
        cfg.mode = mode;
        let out = run(&workload, &arrivals, &pool, &policy, &cfg).map_err(|e| match e {
            e @ (SimError::Invariant { .. } | SimError::SingleExecution { .. }) => {
                Failure::Invariant(format!("{} run: {e}", mode.as_str()))
            }
            e => Failure::Usage(anyhow!("{} run: {e}", mode.as_str())),
        })?;
        let name = mode.as_str();
        write_text(&a.out.join(format!("{name}.json")), &out.report.to_json())?;
        write_text(&a.out.join(format!("{name}_latency_cdf.csv")), &out.report.latency_cdf_csv())?;
        write_text(&a.out.join(format!("{name}_breakdown.csv")), &out.report.breakdown_csv())?;
        if cfg.scheduler.log_level != LogLevel::Off {
            write_log(&a.out.join(format!("{name}_events.jsonl")), &out.log)?;
        }
        let r = &out.report;
        println!(
            "{name}: requests={} e2e_mean_ms={:.1} stall_mean_ms={:.1} launched={} consumed={} wasted_ms={}",
            r.requests.len(),
            r.aggregates.e2e_ms.mean,
            r.mean_stall(),
            r.audit.launched,
            r.audit.consumed,
            r.audit.wasted_ms
        );
        if !r.audit.balanced() {
            return Err(Failure::Invariant(format!("{name} run: audit tallies do not balance")));
        }
        outputs.push(out);
    }
    if let [base, spec] = outputs.as_slice() {
        let cmp = compare_runs(&base.report, &spec.report).map_err(|e| anyhow!("{e}"))?;
        write_text(&a.out.join("delta.json"), &pretty(&cmp))?;
        write_text(&a.out.join("speedup_cdf.csv"), &cmp.speedup_cdf_csv())?;
        println!(
            "delta: mean_speedup={:.4} e2e_reduction={:.4} stall_reduction={:.4} results_identical={}",
            cmp.mean_speedup, cmp.e2e_reduction, cmp.stall_reduction, cmp.results_identical
        );
        if !cmp.results_identical {
            return Err(Failure::Invariant("speculative results differ from baseline".into()));
        }
    }
    Ok(())
}

fn cmd_check_policy(path: &Path) -> Result<()> {
    let policy = load_policy(path)?;
    print!("{}", policy.to_yaml());
    Ok(())
}

fn cmd_gen_corpus(motif: MotifArg, sessions: usize, seed: u64, out: &Path) -> Result<()> {
    let mix = match motif {
        MotifArg::EditVerify => MotifMix::single(Motif::edit_verify()),
        MotifArg::LocateExamine => MotifMix::single(Motif::locate_examine()),
        MotifArg::SearchVisit => MotifMix::single(Motif::search_visit()),
        MotifArg::BatchFetch => MotifMix::single(Motif::batch_fetch()),
        MotifArg::Mix => MotifMix::new(vec![
            (Motif::search_visit(), 1.0),
            (Motif::edit_verify(), 1.0),
            (Motif::locate_examine(), 1.0),
            (Motif::batch_fetch(), 1.0),
        ]),
    };
    let corpus = generate_corpus(&mix, &default_tools(), sessions, seed);
    let mut text = String::new();
    for s in &corpus.sessions {
        for e in &s.events {
            text.push_str(&serde_json::to_string(e)?);
            text.push('\n');
        }
    }
    write_text(out, &text)
}

fn cmd_gen_arrivals(workload: &Path, n: usize, gap: f64, seed: u64, out: &Path) -> Result<()> {
    let w = Workload::from_json(&read_text(workload)?)
        .and_then(|w| w.resolve())
        .map_err(|e| anyhow!("{}: {e}", workload.display()))?;
    if !(gap.is_finite() && gap >= 0.0) {
        bail!("--mean-gap-ms must be a non-negative number");
    }
    let ids: Vec<String> = w.scripts.keys().cloned().collect();
    let arrivals = poisson_arrivals(n, gap, &ids, seed);
    let mut buf = Vec::new();
    write_arrivals(&arrivals, &mut buf)?;
    write_text(out, std::str::from_utf8(&buf)?)
}
