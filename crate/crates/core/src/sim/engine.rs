//! Virtual-clock discrete-event loop: agents alternate think steps and
//! authoritative tool calls against one scheduler and resource pool.

use super::report::{aggregate, PredictionStats, RequestReport, RunReport};
use super::rng::hex8;
use super::script::{AgentScript, CallRecord, Replay};
use super::workload::{Arrival, ResolvedWorkload};
use super::Mode;
use crate::canonical::{canonical_arg_hash, canonical_form};
use crate::event::{Event, Millis, Status};
use crate::miner::PatternPool;
use crate::policy::{admit, plan_execution, ExecMode, ExecutorCaps, SpeculationPolicy};
use crate::predictor::{PatternIndex, Predictor, DEFAULT_WINDOW};
use crate::scheduler::{
    CacheKey, Decision, Estimates, InvariantViolation, JobId, JobKind, LogRecord, Outcome, Route, Scheduler,
    SchedulerConfig, Served, SpecRequest,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub mode: Mode,
    pub seed: u64,
    pub scheduler: SchedulerConfig,
    /// EWMA factor of the duration estimator.
    pub alpha: f64,
    pub warm_fraction: f64,
    pub window: usize,
    /// Check scheduler invariants after every tick.
    pub check_invariants: bool,
    /// Admitted actions submitted per prediction round, highest utility
    /// first; `None` submits all of them.
    pub max_candidates: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Speculative,
            seed: 0,
            scheduler: SchedulerConfig::default(),
            alpha: 0.3,
            warm_fraction: 0.2,
            window: DEFAULT_WINDOW,
            check_invariants: true,
            max_candidates: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("arrival {index}: unknown script {script}")]
    UnknownScript { index: usize, script: String },
    #[error("deadlock at t={t}: {dump}")]
    Deadlock { t: Millis, dump: String },
    #[error("invariant violated at t={t}: {violation}")]
    Invariant { t: Millis, violation: InvariantViolation },
    #[error("single execution violated at t={t}: {key_tool} has overlapping live executions")]
    SingleExecution { t: Millis, key_tool: String },
}

impl SimError {
    pub fn is_invariant(&self) -> bool {
        matches!(self, SimError::Invariant { .. } | SimError::SingleExecution { .. })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub log: Vec<LogRecord>,
    /// Per speculative run: `(job, session, start, end, served)`.
    pub spec_runs: Vec<SpecRunRecord>,
    /// Per request: think intervals.
    pub think_intervals: Vec<Vec<(Millis, Millis)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecRunRecord {
    pub job: JobId,
    pub session: String,
    pub tool: String,
    pub mode: ExecMode,
    pub start: Millis,
    pub end: Millis,
    /// Request whose call this run served.
    pub served_by: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum EvKind {
    ExecDone(JobId),
    ThinkEnd(usize),
    Arrival(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Ev {
    t: Millis,
    /// Authoritative completions, speculative completions, think ends, arrivals.
    class: u8,
    seq: u64,
    kind: EvKind,
}

struct Agent<'w> {
    script: &'w AgentScript,
    script_id: String,
    session: String,
    arrival: Millis,
    history: Vec<Option<CallRecord>>,
    /// Step being thought about or executed; `None` during the final think.
    step: Option<usize>,
    pending_args: Value,
    waiting_since: Millis,
    thinks: Vec<(Millis, Millis)>,
    think_ms: Millis,
    stall_ms: Millis,
    exec_ms: Millis,
    calls: usize,
    hits: usize,
    promotions: usize,
    digest: Sha256,
    last_pred_tools: Vec<String>,
    seq: u64,
    finish: Option<Millis>,
}

struct Inflight {
    status: Status,
    result: Value,
    key: Option<CacheKey>,
    cost: u32,
}

#[derive(Default)]
struct LiveCount {
    spec: u32,
    auth: u32,
}

struct Sim<'a> {
    w: &'a ResolvedWorkload,
    cfg: &'a SimConfig,
    policy: &'a SpeculationPolicy,
    sched: Scheduler,
    predictor: Option<Predictor>,
    heap: BinaryHeap<Reverse<Ev>>,
    seq: u64,
    agents: Vec<Agent<'a>>,
    session_agent: HashMap<String, usize>,
    ticket_agent: HashMap<u64, usize>,
    inflight: HashMap<JobId, Inflight>,
    spec_runs: BTreeMap<JobId, SpecRunRecord>,
    promoted_at: HashMap<JobId, Millis>,
    warm: HashMap<(String, String), (JobId, ExecMode)>,
    revisions: HashMap<(String, String), u64>,
    live: HashMap<CacheKey, LiveCount>,
    auth_busy: f64,
    side_effect_commits: u64,
    pred_steps: usize,
    top1: usize,
    top3: usize,
    hits: usize,
    auth_calls: usize,
}

/// Simulates `arrivals` over the workload. Baseline mode never consults the
/// pool or policy; shadow mode speculates without consuming results.
pub fn run(
    workload: &ResolvedWorkload,
    arrivals: &[Arrival],
    pool: &PatternPool,
    policy: &SpeculationPolicy,
    cfg: &SimConfig,
) -> Result<RunOutput, SimError> {
    let mut sched_cfg = cfg.scheduler.clone();
    sched_cfg.consume = cfg.mode != Mode::Shadow;
    let mut est = Estimates::with_alpha(cfg.alpha);
    est.warm_fraction = cfg.warm_fraction;
    for (name, t) in &workload.tools {
        est.priors.insert(name.clone(), t.mean_full_ms());
        est.costs.insert(name.clone(), t.cost);
    }
    let predictor = (cfg.mode != Mode::Baseline && !pool.is_empty())
        .then(|| Predictor::new(Arc::new(PatternIndex::new(pool.clone())), cfg.window));

    let mut agents = Vec::with_capacity(arrivals.len());
    let mut session_agent = HashMap::new();
    for (i, a) in arrivals.iter().enumerate() {
        let script = workload.scripts.get(&a.script_id).ok_or_else(|| SimError::UnknownScript {
            index: i,
            script: a.script_id.clone(),
        })?;
        let session = format!("r{i}");
        session_agent.insert(session.clone(), i);
        agents.push(Agent {
            script,
            script_id: a.script_id.clone(),
            session,
            arrival: a.arrival_ms,
            history: vec![None; script.steps.len()],
            step: None,
            pending_args: Value::Null,
            waiting_since: 0,
            thinks: Vec::new(),
            think_ms: 0,
            stall_ms: 0,
            exec_ms: 0,
            calls: 0,
            hits: 0,
            promotions: 0,
            digest: Sha256::new(),
            last_pred_tools: Vec::new(),
            seq: 0,
            finish: None,
        });
    }

    let mut sim = Sim {
        w: workload,
        cfg,
        policy,
        sched: Scheduler::new(sched_cfg, est),
        predictor,
        heap: BinaryHeap::new(),
        seq: 0,
        agents,
        session_agent,
        ticket_agent: HashMap::new(),
        inflight: HashMap::new(),
        spec_runs: BTreeMap::new(),
        promoted_at: HashMap::new(),
        warm: HashMap::new(),
        revisions: HashMap::new(),
        live: HashMap::new(),
        auth_busy: 0.0,
        side_effect_commits: 0,
        pred_steps: 0,
        top1: 0,
        top3: 0,
        hits: 0,
        auth_calls: 0,
    };
    for (i, a) in arrivals.iter().enumerate() {
        sim.push(a.arrival_ms, EvKind::Arrival(i));
    }
    sim.drive()?;
    Ok(sim.finish())
}

impl<'a> Sim<'a> {
    fn push(&mut self, t: Millis, kind: EvKind) {
        let class = match kind {
            EvKind::ExecDone(id) if id.kind == JobKind::Authoritative => 0,
            EvKind::ExecDone(_) => 1,
            EvKind::ThinkEnd(_) => 2,
            EvKind::Arrival(_) => 3,
        };
        self.seq += 1;
        self.heap.push(Reverse(Ev {
            t,
            class,
            seq: self.seq,
            kind,
        }));
    }

    fn replay(&self, agent: usize) -> Replay<'_> {
        Replay {
            seed: self.cfg.seed,
            instance: &self.agents[agent].session,
        }
    }

    fn drive(&mut self) -> Result<(), SimError> {
        let mut now = 0;
        while let Some(Reverse(ev)) = self.heap.pop() {
            now = ev.t;
            match ev.kind {
                EvKind::Arrival(a) => self.start_think(a, now, 0),
                EvKind::ThinkEnd(a) => self.think_end(a, now)?,
                EvKind::ExecDone(id) => self.exec_done(id, now)?,
            }
            self.tick(now)?;
        }
        let stuck: Vec<String> = self
            .agents
            .iter()
            .filter(|a| a.finish.is_none())
            .map(|a| format!("{} waiting since {} on step {:?}", a.session, a.waiting_since, a.step))
            .collect();
        if !stuck.is_empty() {
            let r = self.sched.resources();
            return Err(SimError::Deadlock {
                t: now,
                dump: format!(
                    "{} unfinished requests [{}]; pending authoritative {}, resources {:?}",
                    stuck.len(),
                    stuck.into_iter().take(8).collect::<Vec<_>>().join("; "),
                    self.sched.pending_authoritative(),
                    r
                ),
            });
        }
        Ok(())
    }

    /// Begins thinking toward the first runnable step at or after `from`.
    fn start_think(&mut self, a: usize, now: Millis, from: usize) {
        let next = {
            let ag = &self.agents[a];
            self.replay(a).next_step(ag.script, from, &ag.history)
        };
        let ag = &mut self.agents[a];
        let d = match next {
            Some(i) => ag.script.steps[i].think_ms,
            None => ag.script.final_think_ms,
        };
        ag.step = next;
        ag.thinks.push((now, now + d));
        ag.think_ms += d;
        self.push(now + d, EvKind::ThinkEnd(a));
    }

    fn think_end(&mut self, a: usize, now: Millis) -> Result<(), SimError> {
        let Some(step) = self.agents[a].step else {
            self.agents[a].finish = Some(now);
            if let Some(p) = self.predictor.as_mut() {
                p.end_session(&self.agents[a].session);
            }
            return Ok(());
        };
        let args = {
            let ag = &self.agents[a];
            self.replay(a).resolve_args(ag.script, step, &ag.history)
        };
        let tool = self.agents[a].script.steps[step].tool.clone();
        let session = self.agents[a].session.clone();

        if self.predictor.is_some() && self.agents[a].calls > 0 {
            self.pred_steps += 1;
            let preds = &self.agents[a].last_pred_tools;
            if preds.first() == Some(&tool) {
                self.top1 += 1;
            }
            if preds.iter().take(3).any(|t| t == &tool) {
                self.top3 += 1;
            }
        }

        let sub = self.sched.submit_authoritative(now, &session, &tool, args.clone());
        if let Some(sid) = sub.discarded {
            self.end_spec_run(sid, now);
        }
        self.auth_calls += 1;
        {
            let ag = &mut self.agents[a];
            ag.pending_args = args;
            ag.waiting_since = now;
        }
        let warm_ready = self.cfg.mode == Mode::Speculative && self.warm.contains_key(&(session.clone(), tool.clone()));
        let speculative_hit = match sub.route {
            Route::CacheHit(sid) => {
                self.agents[a].hits += 1;
                if let Some(r) = self.spec_runs.get_mut(&sid) {
                    r.served_by = Some(a);
                }
                true
            }
            Route::Joined(sid) => {
                self.agents[a].promotions += 1;
                if let Some(r) = self.spec_runs.get_mut(&sid) {
                    r.served_by = Some(a);
                }
                self.promoted_at.insert(sid, now);
                true
            }
            Route::Queued(_) => warm_ready,
        };
        if self.predictor.is_some() && self.agents[a].calls > 0 && speculative_hit {
            self.hits += 1;
        }
        match sub.ticket.try_get() {
            Some(out) => {
                let exec = self.spec_runs.get(&out.job).map_or(0, |r| r.end - r.start);
                self.on_result(a, out, exec, now);
            }
            None => {
                self.ticket_agent.insert(sub.ticket.request, a);
            }
        }
        Ok(())
    }

    fn on_result(&mut self, a: usize, out: Outcome, exec_ms: Millis, now: Millis) {
        let step = self.agents[a].step.expect("waiting agent has a step");
        let (tool, session, event) = {
            let ag = &mut self.agents[a];
            let tool = ag.script.steps[step].tool.clone();
            ag.stall_ms += now - ag.waiting_since;
            ag.exec_ms += exec_ms;
            ag.calls += 1;
            ag.digest.update(tool.as_bytes());
            ag.digest.update([0, out.status.is_success() as u8, 0]);
            ag.digest.update(canonical_form(&out.result).as_bytes());
            let args = std::mem::take(&mut ag.pending_args);
            let event = Event::tool_call(
                ag.session.clone(),
                ag.seq,
                tool.clone(),
                out.status,
                args.clone(),
                out.result.clone(),
                ag.waiting_since,
                now,
            );
            ag.seq += 1;
            ag.history[step] = Some(CallRecord {
                tool: tool.clone(),
                args,
                status: out.status,
                result: out.result,
            });
            (tool, ag.session.clone(), event)
        };
        let _ = tool;
        self.speculate(a, &session, &event, now);
        self.start_think(a, now, step + 1);
    }

    fn speculate(&mut self, a: usize, session: &str, event: &Event, now: Millis) {
        let Some(pred) = self.predictor.as_mut() else { return };
        pred.observe(event);
        let preds = pred.predict(session);
        self.agents[a].last_pred_tools = preds.iter().map(|p| p.tool_type.clone()).collect();
        let est = &self.sched.estimates;
        let actions = admit(&preds, self.policy, |p, lvl| est.benefit_at(&p.tool_type, lvl));
        self.sched.supersede_session(now, session);
        let limit = self.cfg.max_candidates.unwrap_or(usize::MAX);
        for action in actions.into_iter().take(limit) {
            let Some(model) = self.w.tools.get(&action.prediction.tool_type) else { continue };
            let caps = ExecutorCaps {
                dry_run_supported: model.dry_run_supported,
            };
            let exec = plan_execution(action, caps);
            let req = SpecRequest::from_action(session, &exec, &self.sched.estimates);
            self.sched.submit_speculative(now, req);
        }
    }

    fn end_spec_run(&mut self, id: JobId, now: Millis) {
        if let Some(f) = self.inflight.remove(&id) {
            self.release_live(&f, id);
        }
        if let Some(r) = self.spec_runs.get_mut(&id) {
            r.end = now;
        }
    }

    fn release_live(&mut self, f: &Inflight, id: JobId) {
        if let Some(k) = &f.key {
            if let Some(c) = self.live.get_mut(k) {
                match id.kind {
                    JobKind::Speculative => c.spec -= 1,
                    JobKind::Authoritative => c.auth -= 1,
                }
                if c.spec == 0 && c.auth == 0 {
                    self.live.remove(k);
                }
            }
        }
    }

    fn exec_done(&mut self, id: JobId, now: Millis) -> Result<(), SimError> {
        let Some(f) = self.inflight.remove(&id) else { return Ok(()) };
        self.release_live(&f, id);
        let Some(c) = self.sched.complete(now, id, f.status, f.result) else { return Ok(()) };
        if id.kind == JobKind::Authoritative {
            self.auth_busy += f64::from(f.cost) * c.duration_ms as f64;
        } else {
            if let Some(r) = self.spec_runs.get_mut(&id) {
                r.end = now;
            }
            if let Some(t0) = self.promoted_at.remove(&id) {
                self.auth_busy += f64::from(f.cost) * (now - t0) as f64;
            }
            if c.mode != ExecMode::Full && c.status.is_success() && self.cfg.mode == Mode::Speculative {
                self.warm.insert((c.session.clone(), c.tool_type.clone()), (id, c.mode));
            }
        }
        for t in c.resolved {
            let Some(a) = self.ticket_agent.remove(&t.request) else { continue };
            let out = t.try_get().expect("resolved ticket");
            let exec = match out.served {
                Served::Executed => c.duration_ms,
                Served::CacheHit | Served::Promoted => self.spec_runs.get(&out.job).map_or(c.duration_ms, |r| r.end - r.start),
            };
            self.on_result(a, out, exec, now);
        }
        Ok(())
    }

    fn tick(&mut self, now: Millis) -> Result<(), SimError> {
        let decisions = self.sched.schedule_tick(now);
        for d in decisions {
            match d {
                Decision::Launch(id) => self.launch(id, now)?,
                Decision::Abort(id) => self.end_spec_run(id, now),
            }
        }
        if self.cfg.check_invariants {
            self.sched
                .check_invariants()
                .map_err(|violation| SimError::Invariant { t: now, violation })?;
        }
        Ok(())
    }

    fn launch(&mut self, id: JobId, now: Millis) -> Result<(), SimError> {
        let job = self.sched.job(id).expect("launched job exists").clone();
        let model = &self.w.tools[&job.tool_type];
        let seed = self.cfg.seed;
        let sk = (job.session.clone(), job.tool_type.clone());
        let full_key: CacheKey = (job.tool_type.clone(), canonical_arg_hash(&job.args));
        let (duration, status, result, key) = match (id.kind, job.mode) {
            (JobKind::Authoritative, _) => {
                let mut init = model.init_overhead_ms;
                let mut exec = model.exec_ms(seed, &job.args);
                if self.cfg.mode == Mode::Speculative {
                    if let Some((wid, wmode)) = self.warm.remove(&sk) {
                        init = 0;
                        if wmode == ExecMode::DryRun {
                            exec = (exec as f64 * (1.0 - model.dry_run_fraction)).round() as Millis;
                        }
                        self.sched.note_warm_used(now, wid, &job.tool_type, &job.session);
                        let a = self.session_agent.get(&job.session).copied();
                        if let Some(r) = self.spec_runs.get_mut(&wid) {
                            r.served_by = a;
                        }
                    }
                }
                let (st, res) = self.commit(model, &job.args, &sk);
                (init + exec, st, res, Some(full_key))
            }
            (JobKind::Speculative, ExecMode::Full) => {
                if model.side_effecting {
                    self.side_effect_commits += 1;
                }
                let (st, res) = self.commit(model, &job.args, &sk);
                (model.full_ms(seed, &job.args), st, res, Some(full_key))
            }
            (JobKind::Speculative, ExecMode::DryRun) => {
                let exec = (model.exec_ms(seed, &job.args) as f64 * model.dry_run_fraction).round() as Millis;
                (
                    model.init_overhead_ms + exec,
                    Status::Success,
                    serde_json::json!({ "dry_run": true }),
                    None,
                )
            }
            (JobKind::Speculative, ExecMode::WarmUp) => (
                model.init_overhead_ms.max(1),
                Status::Success,
                serde_json::json!({ "warm": true }),
                None,
            ),
        };
        if let Some(k) = &key {
            let c = self.live.entry(k.clone()).or_default();
            let clash = match id.kind {
                JobKind::Speculative => c.spec > 0 || c.auth > 0,
                JobKind::Authoritative => c.spec > 0,
            };
            if clash {
                return Err(SimError::SingleExecution {
                    t: now,
                    key_tool: k.0.clone(),
                });
            }
            match id.kind {
                JobKind::Speculative => c.spec += 1,
                JobKind::Authoritative => c.auth += 1,
            }
        }
        if id.kind == JobKind::Speculative {
            self.spec_runs.insert(
                id,
                SpecRunRecord {
                    job: id,
                    session: job.session.clone(),
                    tool: job.tool_type.clone(),
                    mode: job.mode,
                    start: now,
                    end: now,
                    served_by: None,
                },
            );
        }
        self.inflight.insert(
            id,
            Inflight {
                status,
                result,
                key,
                cost: job.cost,
            },
        );
        self.push(now + duration, EvKind::ExecDone(id));
        Ok(())
    }

    /// Outcome of a committed execution; side-effecting tools advance the
    /// session's revision counter.
    fn commit(&mut self, model: &super::tools::ToolModel, args: &Value, sk: &(String, String)) -> (Status, Value) {
        let rev = if model.side_effecting {
            let r = self.revisions.entry(sk.clone()).or_insert(0);
            let cur = *r;
            *r += 1;
            cur
        } else {
            0
        };
        model.outcome(self.cfg.seed, args, rev)
    }

    fn finish(self) -> RunOutput {
        let mut per_agent_overlap = vec![0u64; self.agents.len()];
        let mut per_session_overhead: HashMap<&str, u64> = HashMap::new();
        for r in self.spec_runs.values() {
            match r.served_by {
                Some(a) => per_agent_overlap[a] += intersect(&self.agents[a].thinks, r.start, r.end),
                None => *per_session_overhead.entry(r.session.as_str()).or_insert(0) += r.end - r.start,
            }
        }
        let mut requests = Vec::with_capacity(self.agents.len());
        let mut makespan_end = 0;
        let first_arrival = self.agents.iter().map(|a| a.arrival).min().unwrap_or(0);
        for (i, a) in self.agents.iter().enumerate() {
            let finish = a.finish.expect("all requests finished");
            makespan_end = makespan_end.max(finish);
            let digest = a.digest.clone().finalize();
            requests.push(RequestReport {
                request: i,
                script_id: a.script_id.clone(),
                session: a.session.clone(),
                arrival_ms: a.arrival,
                finish_ms: finish,
                e2e_ms: finish - a.arrival,
                think_ms: a.think_ms,
                tool_exec_ms: a.exec_ms,
                tool_stall_ms: a.stall_ms,
                overlap_ms: per_agent_overlap[i],
                spec_overhead_ms: per_session_overhead.get(a.session.as_str()).copied().unwrap_or(0),
                calls: a.calls,
                cache_hits: a.hits,
                promotions: a.promotions,
                results_digest: digest.iter().take(16).map(|b| format!("{b:02x}")).collect(),
            });
        }
        let makespan = makespan_end.saturating_sub(first_arrival);
        let aggregates = aggregate(
            &requests,
            makespan,
            self.auth_busy,
            self.sched.resources().total,
            self.auth_calls,
        );
        let ratio = |n: usize| if self.pred_steps == 0 { 0.0 } else { n as f64 / self.pred_steps as f64 };
        let prediction = PredictionStats {
            steps: self.pred_steps,
            top1: ratio(self.top1),
            top3: ratio(self.top3),
            hit_rate: ratio(self.hits),
        };
        let report = RunReport {
            workload_id: self.w.id.clone(),
            seed: self.cfg.seed,
            mode: self.cfg.mode,
            requests,
            aggregates,
            prediction,
            audit: self.sched.collect_audit(),
            side_effect_commits: self.side_effect_commits,
        };
        let think_intervals = self.agents.iter().map(|a| a.thinks.clone()).collect();
        RunOutput {
            report,
            log: self.sched.log().records().to_vec(),
            spec_runs: self.spec_runs.into_values().collect(),
            think_intervals,
        }
    }
}

/// Length of `[start, end)` covered by the disjoint, sorted `intervals`.
pub fn intersect(intervals: &[(Millis, Millis)], start: Millis, end: Millis) -> Millis {
    intervals
        .iter()
        .map(|&(a, b)| b.min(end).saturating_sub(a.max(start)))
        .sum()
}

/// Short identifier for logs and file names.
pub fn run_label(workload: &str, mode: Mode, seed: u64) -> String {
    format!("{workload}-{}-{}", mode.as_str(), hex8(seed))
}
