use super::*;
use serde_json::json;

fn sched(total: u32, budget: u32) -> Scheduler {
    Scheduler::new(
        SchedulerConfig {
            total,
            budget,
            ..SchedulerConfig::default()
        },
        Estimates::default(),
    )
}

fn spec(tool: &str, url: &str, p: f64, t: f64, c: u32, d: f64) -> SpecRequest {
    SpecRequest {
        session: "s".into(),
        tool_type: tool.into(),
        args: json!({ "url": url }),
        mode: ExecMode::Full,
        level: SpeculationLevel::Full,
        downgraded: false,
        estimate: SpecEstimate {
            p,
            benefit_ms: t,
            cost: c,
            duration_ms: d,
        },
    }
}

fn launched(ds: &[Decision]) -> Vec<JobId> {
    ds.iter()
        .filter_map(|d| match d {
            Decision::Launch(id) => Some(*id),
            _ => None,
        })
        .collect()
}

fn aborted(ds: &[Decision]) -> Vec<JobId> {
    ds.iter()
        .filter_map(|d| match d {
            Decision::Abort(id) => Some(*id),
            _ => None,
        })
        .collect()
}

#[test]
fn utility_ranking_with_budget() {
    let mut s = sched(2, 2);
    let SpecSubmit::Queued(a) = s.submit_speculative(0, spec("f", "a", 0.9, 10_000.0, 1, 2_000.0)) else { panic!() };
    let SpecSubmit::Queued(_b) = s.submit_speculative(0, spec("f", "b", 0.5, 30_000.0, 2, 3_000.0)) else { panic!() };
    let ds = s.schedule_tick(0);
    assert_eq!(launched(&ds), vec![a]);
    assert_eq!(s.resources().budget, 1);
    assert_eq!(s.pending_speculative(), 1);
    s.check_invariants().unwrap();
}

#[test]
fn authoritative_burst_preempts_everything_in_one_tick() {
    let mut s = sched(4, 4);
    for i in 0..4 {
        s.submit_speculative(0, spec("f", &i.to_string(), 0.5, 100.0, 1, 100.0));
    }
    assert_eq!(launched(&s.schedule_tick(0)).len(), 4);
    assert_eq!(s.resources().available, 0);
    for i in 0..4 {
        s.submit_authoritative(10, "s", "g", json!({ "i": i }));
    }
    let ds = s.schedule_tick(10);
    assert_eq!(aborted(&ds).len(), 4);
    assert_eq!(launched(&ds).len(), 4);
    assert!(launched(&ds).iter().all(|id| id.kind == JobKind::Authoritative));
    assert_eq!(s.running_speculative(), 0);
    s.check_invariants().unwrap();
    let audit = s.collect_audit();
    assert_eq!(audit.aborted, 4);
    assert!(audit.balanced());
}

#[test]
fn preemption_takes_lowest_utility_first() {
    let mut s = sched(3, 3);
    s.submit_speculative(0, spec("f", "hi", 0.9, 100.0, 1, 10.0));
    s.submit_speculative(0, spec("f", "lo", 0.1, 100.0, 1, 10.0));
    s.submit_speculative(0, spec("f", "mid", 0.5, 100.0, 1, 10.0));
    s.schedule_tick(0);
    s.submit_authoritative(1, "s", "g", json!({}));
    let ds = s.schedule_tick(1);
    let victim = aborted(&ds);
    assert_eq!(victim.len(), 1);
    assert_eq!(s.job(JobId { kind: JobKind::Speculative, seq: 1 }), None, "low-utility job removed");
}

#[test]
fn cache_hit_serves_without_execution() {
    let mut s = sched(2, 2);
    s.submit_speculative(0, spec("fetch", "a.com", 0.9, 1_000.0, 1, 1_000.0));
    let ds = s.schedule_tick(0);
    let sid = launched(&ds)[0];
    s.complete(1_000, sid, Status::Success, json!("page")).unwrap();
    let sub = s.submit_authoritative(3_000, "s", "fetch", json!({"url": "a.com"}));
    assert_eq!(sub.route, Route::CacheHit(sid));
    let out = sub.ticket.try_get().expect("resolved immediately");
    assert_eq!(out.result, json!("page"));
    assert_eq!(out.served, Served::CacheHit);
    assert!(s.schedule_tick(3_000).is_empty());
    let a = s.collect_audit();
    assert_eq!((a.cache_hits, a.expired, a.consumed), (1, 0, 1));
    assert!(a.balanced());
    // One-shot: the same call again executes.
    let again = s.submit_authoritative(3_001, "s", "fetch", json!({"url": "a.com"}));
    assert!(matches!(again.route, Route::Queued(_)));
}

#[test]
fn promotion_joins_in_flight_run() {
    let mut s = sched(2, 2);
    s.submit_speculative(0, spec("fetch", "a.com", 0.9, 1_000.0, 1, 1_000.0));
    let sid = launched(&s.schedule_tick(0))[0];
    let sub = s.submit_authoritative(400, "s", "fetch", json!({"url": "a.com"}));
    assert_eq!(sub.route, Route::Joined(sid));
    assert!(s.schedule_tick(400).is_empty(), "no second execution");
    let job = s.job(sid).unwrap();
    assert_eq!(job.state, JobState::Promoted);
    assert!(!job.preemptible);
    // A burst cannot preempt the promoted job.
    s.submit_authoritative(500, "s", "g", json!({"x": 1}));
    s.submit_authoritative(500, "s", "g", json!({"x": 2}));
    let ds = s.schedule_tick(500);
    assert!(aborted(&ds).is_empty());
    assert_eq!(launched(&ds).len(), 1);
    let c = s.complete(1_000, sid, Status::Success, json!("page")).unwrap();
    assert_eq!(c.resolved.len(), 1);
    let out = sub.ticket.try_get().unwrap();
    assert_eq!(out.served, Served::Promoted);
    assert!(s.complete(1_000, sid, Status::Success, json!("page")).is_none(), "completes once");
    let a = s.collect_audit();
    assert_eq!((a.promotions, a.launched), (1, 1));
    assert!(a.balanced());
    s.check_invariants().unwrap();
}

#[test]
fn failed_speculation_is_never_served() {
    let mut s = sched(2, 2);
    s.submit_speculative(0, spec("fetch", "a", 0.9, 1_000.0, 1, 1_000.0));
    let sid = launched(&s.schedule_tick(0))[0];
    s.complete(100, sid, Status::Fail, json!({"error": "x"}));
    let sub = s.submit_authoritative(200, "s", "fetch", json!({"url": "a"}));
    assert!(matches!(sub.route, Route::Queued(_)));
    assert!(!sub.ticket.is_ready());
}

#[test]
fn failed_promotion_reexecutes() {
    let mut s = sched(2, 2);
    s.submit_speculative(0, spec("fetch", "a", 0.9, 1_000.0, 1, 1_000.0));
    let sid = launched(&s.schedule_tick(0))[0];
    let sub = s.submit_authoritative(10, "s", "fetch", json!({"url": "a"}));
    let c = s.complete(100, sid, Status::Fail, json!(null)).unwrap();
    assert!(c.resolved.is_empty());
    let aid = c.requeued.unwrap();
    assert_eq!(launched(&s.schedule_tick(100)), vec![aid]);
    s.complete(300, aid, Status::Success, json!("ok")).unwrap();
    assert_eq!(sub.ticket.try_get().unwrap().served, Served::Executed);
}

#[test]
fn duplicate_keys_are_rejected() {
    let mut s = sched(2, 2);
    assert!(matches!(
        s.submit_speculative(0, spec("f", "a", 0.5, 1.0, 1, 1.0)),
        SpecSubmit::Queued(_)
    ));
    assert_eq!(s.submit_speculative(0, spec("f", "a", 0.4, 1.0, 1, 1.0)), SpecSubmit::Duplicate);
    assert!(matches!(
        s.submit_speculative(0, spec("f", "a", 0.9, 1.0, 1, 1.0)),
        SpecSubmit::Replaced { .. }
    ));
    s.schedule_tick(0);
    assert_eq!(s.submit_speculative(1, spec("f", "a", 0.9, 1.0, 1, 1.0)), SpecSubmit::Duplicate);
    s.submit_authoritative(2, "s", "f", json!({"url": "b"}));
    assert_eq!(s.submit_speculative(2, spec("f", "b", 0.9, 1.0, 1, 1.0)), SpecSubmit::Duplicate);
}

#[test]
fn pending_authoritative_blocks_speculation() {
    let mut s = sched(1, 1);
    s.submit_authoritative(0, "s", "g", json!({}));
    s.submit_authoritative(0, "s", "g", json!({"n": 2}));
    s.submit_speculative(0, spec("f", "a", 0.9, 1.0, 1, 1.0));
    let ds = s.schedule_tick(0);
    assert_eq!(launched(&ds).len(), 1);
    assert_eq!(s.pending_authoritative(), 1);
    assert_eq!(s.running_speculative(), 0);
    s.check_invariants().unwrap();
}

#[test]
fn budget_refills_per_epoch() {
    let mut s = sched(4, 1);
    s.submit_speculative(0, spec("f", "a", 0.9, 1.0, 1, 1.0));
    s.submit_speculative(0, spec("f", "b", 0.8, 1.0, 1, 1.0));
    let a = launched(&s.schedule_tick(0))[0];
    s.complete(10, a, Status::Success, json!(1));
    assert!(launched(&s.schedule_tick(10)).is_empty(), "budget spent this epoch");
    assert_eq!(launched(&s.schedule_tick(1_000)).len(), 1);
}

#[test]
fn supersede_drops_only_pending() {
    let mut s = sched(1, 1);
    s.submit_speculative(0, spec("f", "a", 0.9, 1.0, 1, 1.0));
    s.submit_speculative(0, spec("f", "b", 0.8, 1.0, 1, 1.0));
    s.schedule_tick(0);
    assert_eq!(s.supersede_session(1, "s"), 1);
    assert_eq!(s.running_speculative(), 1);
    assert_eq!(s.collect_audit().superseded, 1);
}

#[test]
fn deny_all_leaves_no_tallies() {
    let mut s = sched(2, 2);
    let sub = s.submit_authoritative(0, "s", "g", json!({}));
    let id = launched(&s.schedule_tick(0))[0];
    s.complete(5, id, Status::Success, json!(1));
    assert!(sub.ticket.is_ready());
    assert!(s.collect_audit().is_zero_speculation());
    assert_eq!(s.collect_audit(), AuditReport::default());
}

#[test]
fn dry_run_is_no_commit_and_never_cached() {
    let mut s = sched(2, 2);
    let mut req = spec("pip_install", "numpy", 0.9, 100.0, 1, 100.0);
    req.mode = ExecMode::DryRun;
    req.level = SpeculationLevel::DryRun;
    s.submit_speculative(0, req);
    let id = launched(&s.schedule_tick(0))[0];
    s.complete(50, id, Status::Success, json!("resolved"));
    assert!(s.cache().is_empty());
    let sub = s.submit_authoritative(60, "s", "pip_install", json!({"url": "numpy"}));
    assert!(matches!(sub.route, Route::Queued(_)));
    let a = s.collect_audit();
    assert_eq!((a.no_commit, a.committed_no_commit, a.launched_dry_run), (1, 0, 1));
    assert!(s.note_warm_used(60, id, "pip_install", "s"));
    assert!(s.collect_audit().balanced());
}

#[test]
fn stale_completion_after_abort_is_ignored() {
    let mut s = sched(1, 1);
    s.submit_speculative(0, spec("f", "a", 0.9, 1.0, 1, 1.0));
    let sid = launched(&s.schedule_tick(0))[0];
    s.submit_authoritative(1, "s", "g", json!({}));
    s.schedule_tick(1);
    assert!(s.complete(2, sid, Status::Success, json!(1)).is_none());
    s.check_invariants().unwrap();
}

#[test]
fn log_records_transitions() {
    let mut s = sched(1, 1);
    s.submit_authoritative(0, "s", "g", json!({}));
    let id = launched(&s.schedule_tick(0))[0];
    s.complete(7, id, Status::Success, json!(1));
    let states: Vec<_> = s.log().records().iter().map(|r| (r.state_from, r.state_to)).collect();
    assert_eq!(
        states,
        vec![
            (None, JobState::Pending),
            (Some(JobState::Pending), JobState::Running),
            (Some(JobState::Running), JobState::Completed)
        ]
    );
    assert_eq!(authoritative_dispatches(s.log().records()), vec![(0, id, "g".to_string(), "s".to_string())]);
}
