//! Authoritative-first scheduler with opportunistic speculation.
//!
//! One tick runs four stages: confirmation happens on submission (cache hit
//! or promotion), then preemption for pending authoritative demand, primary
//! dispatch, and greedy speculative launch by utility within slack and
//! budget. The job table, resources, and cache are one consistency domain;
//! all mutation goes through `&mut self`.

pub mod audit;
pub mod cache;
pub mod estimates;
pub mod job;
pub mod log;
pub mod select;
pub mod ticket;

pub use audit::AuditReport;
pub use cache::{CacheEntry, CacheKey, EntryState, ResultCache};
pub use estimates::{Estimates, Observation, ToolStats};
pub use job::{utility, Job, JobId, JobKind, JobState, SpecEstimate};
pub use log::{authoritative_dispatches, EventLog, LogLevel, LogRecord};
pub use select::{expected_utility, greedy_select, rank_by_utility};
pub use ticket::{Outcome, Served, Ticket};

use crate::canonical::canonical_arg_hash;
use crate::event::{Millis, Status};
use crate::policy::{ExecMode, ExecutableAction, SpeculationLevel};
use crate::predictor::PredictedArgs;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    /// `R_total` in abstract units.
    pub total: u32,
    /// Speculative units granted per epoch (`B`).
    pub budget: u32,
    pub epoch_ms: Millis,
    /// Pending speculative jobs kept; the lowest-utility ones beyond it are dropped.
    pub max_pending_spec: usize,
    pub log_level: LogLevel,
    /// When false, speculation runs but never serves authoritative calls:
    /// an arriving call discards the matching speculative run or result.
    pub consume: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            total: 8,
            budget: 4,
            epoch_ms: 1_000,
            max_pending_spec: 256,
            log_level: LogLevel::All,
            consume: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResourceState {
    pub total: u32,
    pub available: u32,
    pub budget_max: u32,
    /// Remaining speculative budget in the current epoch.
    pub budget: u32,
    pub auth_held: u32,
    /// Held by unpromoted speculative jobs.
    pub spec_held: u32,
}

/// Policy for dispatching pending authoritative jobs.
pub trait PrimaryScheduling: fmt::Debug + Send {
    /// Position in `queue` of the next job to dispatch, or `None` to stop.
    fn select(&mut self, queue: &VecDeque<JobId>, jobs: &BTreeMap<JobId, Job>, available: u32) -> Option<usize>;
}

/// Head-of-line FIFO.
#[derive(Debug, Clone, Copy, Default)]
pub struct Fifo;

impl PrimaryScheduling for Fifo {
    fn select(&mut self, queue: &VecDeque<JobId>, jobs: &BTreeMap<JobId, Job>, available: u32) -> Option<usize> {
        let head = queue.front()?;
        (jobs[head].cost <= available).then_some(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Decision {
    Launch(JobId),
    Abort(JobId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Route {
    CacheHit(JobId),
    Joined(JobId),
    Queued(JobId),
}

#[derive(Debug, Clone)]
pub struct Submitted {
    pub ticket: Ticket,
    pub route: Route,
    /// Speculative run aborted because consumption is disabled.
    pub discarded: Option<JobId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpecSubmit {
    Queued(JobId),
    /// Replaced a lower-utility pending job for the same key.
    Replaced { new: JobId, old: JobId },
    Duplicate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecRequest {
    pub session: String,
    pub tool_type: String,
    pub args: Value,
    pub mode: ExecMode,
    pub level: SpeculationLevel,
    pub downgraded: bool,
    pub estimate: SpecEstimate,
}

impl SpecRequest {
    pub fn from_action(session: &str, exec: &ExecutableAction, est: &Estimates) -> Self {
        let pred = &exec.action.prediction;
        let args = match &pred.args {
            PredictedArgs::Full(v) | PredictedArgs::Partial(v) => v.clone(),
            PredictedArgs::ToolOnly => Value::Null,
        };
        let level = match exec.mode {
            ExecMode::Full => SpeculationLevel::Full,
            ExecMode::DryRun => SpeculationLevel::DryRun,
            ExecMode::WarmUp => SpeculationLevel::WarmOnly,
        };
        let tool = &pred.tool_type;
        Self {
            session: session.to_string(),
            tool_type: tool.clone(),
            args,
            mode: exec.mode,
            level,
            downgraded: exec.downgraded,
            estimate: SpecEstimate {
                p: pred.probability,
                benefit_ms: est.benefit_at(tool, level),
                cost: est.cost(tool),
                duration_ms: est.duration_at(tool, level).max(1.0),
            },
        }
    }
}

/// Finished execution reported back by the executor.
#[derive(Debug, Clone)]
pub struct Completion {
    pub job: JobId,
    pub tool_type: String,
    pub session: String,
    pub args: Value,
    pub mode: ExecMode,
    pub status: Status,
    pub duration_ms: Millis,
    /// Tickets resolved by this completion.
    pub resolved: Vec<Ticket>,
    /// Jobs queued to re-execute a failed promoted run.
    pub requeued: Option<JobId>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvariantViolation {
    #[error("resource accounting broken: {0}")]
    Accounting(String),
    #[error("speculative hold {held} exceeds budget {budget}")]
    Budget { held: u32, budget: u32 },
    #[error("authoritative demand pending while speculative job {0} holds resources")]
    Interference(JobId),
    #[error("key of {0} has two live executions")]
    DoubleExecution(JobId),
}

/// Key for `no_commit` deduplication: preparation is per session.
type WarmKey = (String, String, ExecMode);

#[derive(Debug)]
pub struct Scheduler {
    cfg: SchedulerConfig,
    res: ResourceState,
    epoch_start: Millis,
    jobs: BTreeMap<JobId, Job>,
    waiters: HashMap<JobId, Vec<Ticket>>,
    pending_auth: VecDeque<JobId>,
    pending_spec: BTreeSet<JobId>,
    pending_spec_keys: HashMap<CacheKey, JobId>,
    running_spec: BTreeSet<JobId>,
    auth_live_keys: HashMap<CacheKey, u32>,
    warm_live: HashMap<WarmKey, JobId>,
    /// Completed, unconsumed speculative jobs and their run time.
    expired_jobs: HashMap<JobId, Millis>,
    cache: ResultCache,
    pub estimates: Estimates,
    log: EventLog,
    audit: AuditReport,
    primary: Box<dyn PrimaryScheduling>,
    next_auth: u64,
    next_spec: u64,
    next_request: u64,
}

impl Scheduler {
    pub fn new(cfg: SchedulerConfig, estimates: Estimates) -> Self {
        Self::with_primary(cfg, estimates, Box::new(Fifo))
    }

    pub fn with_primary(cfg: SchedulerConfig, estimates: Estimates, primary: Box<dyn PrimaryScheduling>) -> Self {
        let budget = cfg.budget.min(cfg.total);
        Self {
            res: ResourceState {
                total: cfg.total,
                available: cfg.total,
                budget_max: budget,
                budget,
                auth_held: 0,
                spec_held: 0,
            },
            log: EventLog::new(cfg.log_level),
            cfg,
            epoch_start: 0,
            jobs: BTreeMap::new(),
            waiters: HashMap::new(),
            pending_auth: VecDeque::new(),
            pending_spec: BTreeSet::new(),
            pending_spec_keys: HashMap::new(),
            running_spec: BTreeSet::new(),
            auth_live_keys: HashMap::new(),
            warm_live: HashMap::new(),
            expired_jobs: HashMap::new(),
            cache: ResultCache::default(),
            estimates,
            audit: AuditReport::default(),
            primary,
            next_auth: 0,
            next_spec: 0,
            next_request: 0,
        }
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.cfg
    }

    pub fn resources(&self) -> ResourceState {
        self.res
    }

    pub fn job(&self, id: JobId) -> Option<&Job> {
        self.jobs.get(&id)
    }

    pub fn cache(&self) -> &ResultCache {
        &self.cache
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn pending_authoritative(&self) -> usize {
        self.pending_auth.len()
    }

    pub fn pending_speculative(&self) -> usize {
        self.pending_spec.len()
    }

    pub fn running_speculative(&self) -> usize {
        self.running_spec.len()
    }

    fn transition(&mut self, now: Millis, id: JobId, to: JobState, reason: &str) {
        let job = self.jobs.get_mut(&id).expect("known job");
        let from = job.state;
        job.state = to;
        let rec = LogRecord {
            t: now,
            job_id: id,
            kind: id.kind,
            state_from: Some(from),
            state_to: to,
            reason: reason.to_string(),
            tool: job.tool_type.clone(),
            session: job.session.clone(),
        };
        self.log.push(rec);
    }

    fn log_created(&mut self, now: Millis, id: JobId, reason: &str) {
        let job = &self.jobs[&id];
        let rec = LogRecord {
            t: now,
            job_id: id,
            kind: id.kind,
            state_from: None,
            state_to: job.state,
            reason: reason.to_string(),
            tool: job.tool_type.clone(),
            session: job.session.clone(),
        };
        self.log.push(rec);
    }

    fn log_consumed(&mut self, now: Millis, id: JobId, tool: &str, session: &str, reason: &str) {
        self.log.push(LogRecord {
            t: now,
            job_id: id,
            kind: JobKind::Speculative,
            state_from: Some(JobState::Completed),
            state_to: JobState::Completed,
            reason: reason.to_string(),
            tool: tool.to_string(),
            session: session.to_string(),
        });
    }

    fn new_auth_job(&mut self, now: Millis, session: &str, tool: &str, args: Value, key: CacheKey) -> JobId {
        let id = JobId {
            kind: JobKind::Authoritative,
            seq: self.next_auth,
        };
        self.next_auth += 1;
        let d = self.estimates.mean_duration(tool);
        let job = Job {
            id,
            session: session.to_string(),
            tool_type: tool.to_string(),
            args,
            key: key.1,
            state: JobState::Pending,
            preemptible: false,
            cost: self.estimates.cost(tool).min(self.res.total.max(1)),
            mode: ExecMode::Full,
            level: None,
            p: 1.0,
            benefit_ms: d,
            duration_ms: d.max(1.0),
            no_commit: false,
            submitted_at: now,
            started_at: None,
            finished_at: None,
            consumed: false,
        };
        self.jobs.insert(id, job);
        *self.auth_live_keys.entry(key).or_insert(0) += 1;
        self.pending_auth.push_back(id);
        id
    }

    /// Routes an authoritative call: completed speculative result, promotion
    /// of an in-flight speculative run, or a queued execution.
    pub fn submit_authoritative(&mut self, now: Millis, session: &str, tool: &str, args: Value) -> Submitted {
        let request = self.next_request;
        self.next_request += 1;
        let ticket = Ticket::new(request);
        let key: CacheKey = (tool.to_string(), canonical_arg_hash(&args));
        let mut discarded = None;

        if !self.cfg.consume {
            match self.cache.get(&key).map(|e| e.state.clone()) {
                Some(EntryState::InFlight(sid)) => {
                    self.abort_running(now, sid);
                    discarded = Some(sid);
                }
                Some(EntryState::Done { .. }) => {
                    self.cache.remove(&key);
                }
                None => {}
            }
        } else if let Some(entry) = self.cache.get(&key).cloned() {
            match entry.state {
                EntryState::Done {
                    job,
                    status: Status::Success,
                    result,
                    no_commit: false,
                } => {
                    self.cache.remove(&key);
                    if let Some(d) = self.expired_jobs.remove(&job) {
                        self.audit.expired -= 1;
                        self.audit.wasted_ms -= d as f64;
                    }
                    self.audit.cache_hits += 1;
                    self.audit.consumed += 1;
                    self.log_consumed(now, job, tool, session, "consumed_cache_hit");
                    ticket.resolve(Outcome {
                        status: Status::Success,
                        result,
                        served: Served::CacheHit,
                        job,
                        finished_at: now,
                    });
                    return Submitted {
                        ticket,
                        route: Route::CacheHit(job),
                        discarded,
                    };
                }
                EntryState::Done { .. } => {
                    // Failed or uncommittable runs are never served.
                    self.cache.remove(&key);
                }
                EntryState::InFlight(sid) => {
                    self.promote(now, sid);
                    self.waiters.entry(sid).or_default().push(ticket.clone());
                    return Submitted {
                        ticket,
                        route: Route::Joined(sid),
                        discarded,
                    };
                }
            }
        }

        if let Some(pid) = self.pending_spec_keys.get(&key).copied() {
            self.drop_pending_spec(now, pid, "authoritative_arrived");
        }
        let id = self.new_auth_job(now, session, tool, args, key);
        self.log_created(now, id, "submitted");
        self.waiters.entry(id).or_default().push(ticket.clone());
        Submitted {
            ticket,
            route: Route::Queued(id),
            discarded,
        }
    }

    fn promote(&mut self, now: Millis, sid: JobId) {
        let job = self.jobs.get_mut(&sid).expect("in-flight job");
        if job.state == JobState::Promoted {
            return;
        }
        job.preemptible = false;
        job.consumed = true;
        let c = job.cost;
        self.running_spec.remove(&sid);
        self.res.spec_held -= c;
        self.res.auth_held += c;
        self.audit.promotions += 1;
        self.audit.consumed += 1;
        self.audit.running -= 1;
        self.transition(now, sid, JobState::Promoted, "promoted");
    }

    /// Queues a speculative action. Full runs are rejected when the key is
    /// live or cached; preparation runs are deduplicated per session.
    pub fn submit_speculative(&mut self, now: Millis, req: SpecRequest) -> SpecSubmit {
        self.audit.submitted += 1;
        let key: CacheKey = (req.tool_type.clone(), canonical_arg_hash(&req.args));
        let no_commit = req.mode != ExecMode::Full;
        let u = req.estimate.utility();
        let mut replaced = None;
        if no_commit {
            let wk = (req.session.clone(), req.tool_type.clone(), req.mode);
            if let Some(&old) = self.warm_live.get(&wk) {
                if self.jobs[&old].state != JobState::Pending || self.jobs[&old].utility() >= u {
                    self.audit.duplicates += 1;
                    return SpecSubmit::Duplicate;
                }
                self.drop_pending_spec(now, old, "replaced");
                replaced = Some(old);
            }
        } else {
            if self.cache.contains(&key) || self.auth_live_keys.contains_key(&key) {
                self.audit.duplicates += 1;
                return SpecSubmit::Duplicate;
            }
            if let Some(&old) = self.pending_spec_keys.get(&key) {
                if self.jobs[&old].utility() >= u {
                    self.audit.duplicates += 1;
                    return SpecSubmit::Duplicate;
                }
                self.drop_pending_spec(now, old, "replaced");
                replaced = Some(old);
            }
        }

        let id = JobId {
            kind: JobKind::Speculative,
            seq: self.next_spec,
        };
        self.next_spec += 1;
        let e = req.estimate;
        let job = Job {
            id,
            session: req.session.clone(),
            tool_type: req.tool_type.clone(),
            args: req.args,
            key: key.1,
            state: JobState::Pending,
            preemptible: true,
            cost: e.cost.clamp(1, self.res.total.max(1)),
            mode: req.mode,
            level: Some(req.level),
            p: e.p.clamp(f64::MIN_POSITIVE, 1.0),
            benefit_ms: e.benefit_ms.max(0.0),
            duration_ms: e.duration_ms.max(1.0),
            no_commit,
            submitted_at: now,
            started_at: None,
            finished_at: None,
            consumed: false,
        };
        self.jobs.insert(id, job);
        if req.downgraded {
            self.audit.downgraded += 1;
        }
        if no_commit {
            self.warm_live.insert((req.session, req.tool_type, req.mode), id);
        } else {
            self.pending_spec_keys.insert(key, id);
        }
        self.pending_spec.insert(id);
        self.log_created(now, id, "predicted");
        self.enforce_pending_cap(now);
        match replaced {
            Some(old) => SpecSubmit::Replaced { new: id, old },
            None => SpecSubmit::Queued(id),
        }
    }

    fn enforce_pending_cap(&mut self, now: Millis) {
        while self.pending_spec.len() > self.cfg.max_pending_spec {
            let worst = self
                .pending_spec
                .iter()
                .copied()
                .min_by(|a, b| {
                    let (ja, jb) = (&self.jobs[a], &self.jobs[b]);
                    ja.utility().total_cmp(&jb.utility()).then(b.cmp(a))
                })
                .expect("non-empty");
            self.drop_pending_spec(now, worst, "queue_full");
        }
    }

    fn drop_pending_spec(&mut self, now: Millis, id: JobId, reason: &str) {
        if !self.pending_spec.remove(&id) {
            return;
        }
        self.unindex_spec(id);
        self.audit.superseded += 1;
        self.transition(now, id, JobState::Aborted, reason);
        self.jobs.remove(&id);
    }

    fn unindex_spec(&mut self, id: JobId) {
        let job = &self.jobs[&id];
        if job.no_commit {
            let wk = (job.session.clone(), job.tool_type.clone(), job.mode);
            if self.warm_live.get(&wk) == Some(&id) {
                self.warm_live.remove(&wk);
            }
        } else {
            let key = (job.tool_type.clone(), job.key);
            if self.pending_spec_keys.get(&key) == Some(&id) {
                self.pending_spec_keys.remove(&key);
            }
        }
    }

    /// Drops every not-yet-launched speculative job of `session`; used when a
    /// fresh prediction round replaces stale predictions.
    pub fn supersede_session(&mut self, now: Millis, session: &str) -> usize {
        let stale: Vec<JobId> = self
            .pending_spec
            .iter()
            .copied()
            .filter(|id| self.jobs[id].session == session)
            .collect();
        for id in &stale {
            self.drop_pending_spec(now, *id, "superseded");
        }
        stale.len()
    }

    fn refill_budget(&mut self, now: Millis) {
        let epoch = self.cfg.epoch_ms.max(1);
        if now >= self.epoch_start + epoch {
            self.epoch_start = now - (now - self.epoch_start) % epoch;
            self.res.budget = self.res.budget_max.saturating_sub(self.res.spec_held);
        }
    }

    fn pending_auth_demand(&self) -> u64 {
        self.pending_auth.iter().map(|id| u64::from(self.jobs[id].cost)).sum()
    }

    /// Runs stages 2 to 4 and returns launches and aborts for the executor.
    pub fn schedule_tick(&mut self, now: Millis) -> Vec<Decision> {
        self.refill_budget(now);
        let mut out = Vec::new();

        // Stage 2: preempt lowest-utility speculative work for authoritative demand.
        let demand = self.pending_auth_demand();
        if demand > u64::from(self.res.available) && !self.running_spec.is_empty() {
            let mut victims: Vec<JobId> = self.running_spec.iter().copied().collect();
            victims.sort_by(|a, b| {
                let (ja, jb) = (&self.jobs[a], &self.jobs[b]);
                ja.utility()
                    .total_cmp(&jb.utility())
                    .then(ja.p.total_cmp(&jb.p))
                    .then(b.cmp(a))
            });
            for v in victims {
                if demand <= u64::from(self.res.available) {
                    break;
                }
                self.abort_running(now, v);
                out.push(Decision::Abort(v));
            }
        }

        // Stage 3: primary scheduling.
        while let Some(pos) = self.primary.select(&self.pending_auth, &self.jobs, self.res.available) {
            let id = self.pending_auth.remove(pos).expect("selected position");
            let c = self.jobs[&id].cost;
            assert!(c <= self.res.available, "primary policy selected a job that does not fit");
            self.res.available -= c;
            self.res.auth_held += c;
            self.jobs.get_mut(&id).expect("pending").started_at = Some(now);
            self.transition(now, id, JobState::Running, "dispatch");
            out.push(Decision::Launch(id));
        }

        // Stage 4: speculative work only on slack left after every authoritative job is admitted.
        if self.pending_auth.is_empty() && !self.pending_spec.is_empty() {
            let mut ranked: Vec<JobId> = self.pending_spec.iter().copied().collect();
            ranked.sort_by(|a, b| {
                let (ja, jb) = (&self.jobs[a], &self.jobs[b]);
                jb.utility()
                    .total_cmp(&ja.utility())
                    .then(jb.p.total_cmp(&ja.p))
                    .then(ja.cost.cmp(&jb.cost))
                    .then(a.cmp(b))
            });
            for id in ranked {
                if self.res.available == 0 || self.res.budget == 0 {
                    break;
                }
                let c = self.jobs[&id].cost;
                if c > self.res.available || c > self.res.budget {
                    continue;
                }
                self.launch_spec(now, id);
                out.push(Decision::Launch(id));
            }
        }
        out
    }

    fn launch_spec(&mut self, now: Millis, id: JobId) {
        self.pending_spec.remove(&id);
        let job = &self.jobs[&id];
        let (c, mode, no_commit) = (job.cost, job.mode, job.no_commit);
        let key = (job.tool_type.clone(), job.key);
        if !no_commit {
            if self.pending_spec_keys.get(&key) == Some(&id) {
                self.pending_spec_keys.remove(&key);
            }
            let fresh = self.cache.begin(key, id, now);
            debug_assert!(fresh, "speculative launch on a live key");
        }
        self.res.available -= c;
        self.res.budget -= c;
        self.res.spec_held += c;
        self.running_spec.insert(id);
        self.jobs.get_mut(&id).expect("pending").started_at = Some(now);
        self.audit.launched += 1;
        self.audit.running += 1;
        match mode {
            ExecMode::Full => self.audit.launched_full += 1,
            ExecMode::DryRun => self.audit.launched_dry_run += 1,
            ExecMode::WarmUp => self.audit.launched_warm_up += 1,
        }
        if no_commit {
            self.audit.no_commit += 1;
        }
        self.transition(now, id, JobState::Running, "speculate");
    }

    fn abort_running(&mut self, now: Millis, id: JobId) {
        self.running_spec.remove(&id);
        let job = &self.jobs[&id];
        let c = job.cost;
        let ran = now - job.started_at.unwrap_or(now);
        if !job.no_commit {
            let key = (job.tool_type.clone(), job.key);
            self.cache.release(&key, id);
        }
        self.unindex_spec(id);
        self.res.available += c;
        self.res.spec_held -= c;
        self.audit.aborted += 1;
        self.audit.running -= 1;
        self.audit.wasted_ms += ran as f64;
        self.transition(now, id, JobState::Aborted, "preempted");
        self.jobs.remove(&id);
    }

    /// Records a finished execution. Returns `None` for executions that were
    /// aborted earlier (their completion is stale).
    pub fn complete(&mut self, now: Millis, id: JobId, status: Status, result: Value) -> Option<Completion> {
        let job = self.jobs.get(&id)?;
        if !job.state.holds_resources() {
            return None;
        }
        let job = job.clone();
        let started = job.started_at.unwrap_or(now);
        let duration = now.saturating_sub(started);
        self.res.available += job.cost;
        let key: CacheKey = (job.tool_type.clone(), job.key);
        let mut resolved = Vec::new();
        let mut requeued = None;
        if status == Status::Fail && id.kind == JobKind::Speculative {
            self.audit.failed += 1;
        }

        match (id.kind, job.state) {
            (JobKind::Authoritative, _) => {
                self.res.auth_held -= job.cost;
                if let Some(n) = self.auth_live_keys.get_mut(&key) {
                    *n -= 1;
                    if *n == 0 {
                        self.auth_live_keys.remove(&key);
                    }
                }
                self.transition(now, id, JobState::Completed, status_reason(status));
                resolved = self.resolve_waiters(id, status, &result, Served::Executed, now);
            }
            (JobKind::Speculative, JobState::Promoted) => {
                self.res.auth_held -= job.cost;
                self.cache.release(&key, id);
                self.transition(now, id, JobState::Completed, status_reason(status));
                if status.is_success() {
                    resolved = self.resolve_waiters(id, status, &result, Served::Promoted, now);
                } else {
                    // A failed speculative run is never surfaced; re-execute.
                    let tickets = self.waiters.remove(&id).unwrap_or_default();
                    let aid = self.new_auth_job(now, &job.session, &job.tool_type, job.args.clone(), key);
                    self.log_created(now, aid, "reexecute_failed_promotion");
                    self.waiters.insert(aid, tickets);
                    requeued = Some(aid);
                }
            }
            (JobKind::Speculative, _) => {
                self.res.spec_held -= job.cost;
                self.running_spec.remove(&id);
                self.unindex_spec(id);
                if !job.no_commit {
                    self.cache.finish(&key, id, status, result.clone(), false);
                }
                self.audit.running -= 1;
                self.audit.expired += 1;
                self.audit.wasted_ms += duration as f64;
                self.expired_jobs.insert(id, duration);
                self.transition(now, id, JobState::Completed, status_reason(status));
            }
        }
        self.estimates.update_estimates(
            &job.tool_type,
            Observation {
                duration_ms: duration as f64,
                stall_saved_ms: 0.0,
            },
        );
        self.jobs.remove(&id);
        Some(Completion {
            job: id,
            tool_type: job.tool_type,
            session: job.session,
            args: job.args,
            mode: job.mode,
            status,
            duration_ms: duration,
            resolved,
            requeued,
        })
    }

    fn resolve_waiters(&mut self, id: JobId, status: Status, result: &Value, served: Served, now: Millis) -> Vec<Ticket> {
        let tickets = self.waiters.remove(&id).unwrap_or_default();
        for t in &tickets {
            t.resolve(Outcome {
                status,
                result: result.clone(),
                served,
                job: id,
                finished_at: now,
            });
        }
        tickets
    }

    /// Marks a completed preparation run (dry run or warm-up) as used.
    pub fn note_warm_used(&mut self, now: Millis, id: JobId, tool: &str, session: &str) -> bool {
        match self.expired_jobs.remove(&id) {
            Some(d) => {
                self.audit.expired -= 1;
                self.audit.wasted_ms -= d as f64;
                self.audit.warm_used += 1;
                self.audit.consumed += 1;
                self.log_consumed(now, id, tool, session, "consumed_warm");
                true
            }
            None => false,
        }
    }

    pub fn collect_audit(&self) -> AuditReport {
        self.audit
    }

    /// Structural invariants; valid between ticks.
    pub fn check_invariants(&self) -> Result<(), InvariantViolation> {
        let r = &self.res;
        if r.available + r.auth_held + r.spec_held != r.total {
            return Err(InvariantViolation::Accounting(format!(
                "available {} + auth {} + spec {} != total {}",
                r.available, r.auth_held, r.spec_held, r.total
            )));
        }
        if r.spec_held > r.budget_max || r.spec_held + r.budget > r.budget_max {
            return Err(InvariantViolation::Budget {
                held: r.spec_held,
                budget: r.budget_max,
            });
        }
        if !self.pending_auth.is_empty() {
            if let Some(&id) = self.running_spec.iter().next() {
                return Err(InvariantViolation::Interference(id));
            }
        }
        for (key, id) in self.cache.in_flight() {
            if self.auth_live_keys.contains_key(key) {
                return Err(InvariantViolation::DoubleExecution(id));
            }
        }
        Ok(())
    }
}

fn status_reason(s: Status) -> &'static str {
    match s {
        Status::Success => "completed",
        Status::Fail => "failed",
    }
}

#[cfg(test)]
mod tests;
