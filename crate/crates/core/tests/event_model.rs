mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use serde_json::{json, Value};
use spectool_core::canonical::{canonical_arg_hash, canonical_form};
use spectool_core::event::{signature_of, Event, Status};
use spectool_core::ingest::{ingest_trace, IngestConfig};

fn jsonl(events: &[Event]) -> String {
    events.iter().map(|e| serde_json::to_string(e).unwrap() + "\n").collect()
}

#[test]
fn session_count_equals_gaps_over_threshold_plus_one() {
    let threshold = 300_000;
    for seed in 0..5 {
        let mut r = rng(seed);
        let (mut t, mut over) = (0u64, 0usize);
        let mut events = Vec::new();
        for i in 0..1000u64 {
            if i > 0 {
                // Exact-threshold gaps stay in the session.
                let gap = match r.random_range(0..10) {
                    0 => threshold + r.random_range(1..1_000_000),
                    1 => threshold,
                    _ => r.random_range(0..threshold),
                };
                over += usize::from(gap > threshold);
                t += gap;
            }
            let d = r.random_range(0..5_000);
            events.push(Event::tool_call("sess", i, "t", Status::Success, json!({}), json!({}), t, t + d));
            t += d;
        }
        let rep = ingest_trace(jsonl(&events).as_bytes(), &IngestConfig { inactivity_threshold_ms: threshold }).unwrap();
        assert_eq!(rep.sessions.len(), over + 1, "seed {seed}");
        assert_eq!(rep.event_count(), 1000);
    }
}

#[test]
fn single_leaf_changes_never_collide() {
    let mut r = rng(42);
    let mut hashes = Vec::new();
    for i in 0..500 {
        let base = json!({ "id": i, "payload": random_payload(&mut r, 3) });
        let mut other = base.clone();
        other["id"] = json!(format!("{i}-mutated"));
        let (a, b) = (canonical_arg_hash(&base), canonical_arg_hash(&other));
        assert_ne!(a, b);
        hashes.push(a);
        hashes.push(b);
    }
    let n = hashes.len();
    hashes.sort();
    hashes.dedup();
    assert_eq!(hashes.len(), n, "pairwise collision among 1000 payloads");
}

/// Rebuilds every object of `v` with its keys in reverse insertion order.
fn reverse_keys(v: &Value) -> Value {
    match v {
        Value::Object(m) => {
            let mut out = serde_json::Map::new();
            let mut entries: Vec<_> = m.iter().collect();
            entries.reverse();
            for (k, x) in entries {
                out.insert(k.clone(), reverse_keys(x));
            }
            Value::Object(out)
        }
        Value::Array(a) => Value::Array(a.iter().map(reverse_keys).collect()),
        x => x.clone(),
    }
}

proptest! {
    #[test]
    fn hash_ignores_key_order(seed in any::<u64>()) {
        let v = random_payload(&mut rng(seed), 4);
        let text = serde_json::to_string(&v).unwrap();
        let reparsed: Value = serde_json::from_str(&text).unwrap();
        prop_assert_eq!(canonical_arg_hash(&v), canonical_arg_hash(&reverse_keys(&reparsed)));
        prop_assert_eq!(canonical_form(&v), canonical_form(&reverse_keys(&v)));
    }

    #[test]
    fn hash_is_list_order_sensitive(a in any::<i32>(), b in any::<i32>()) {
        prop_assume!(a != b);
        prop_assert_ne!(canonical_arg_hash(&json!([a, b])), canonical_arg_hash(&json!([b, a])));
    }

    #[test]
    fn integral_floats_hash_like_integers(n in -1_000_000i64..1_000_000) {
        prop_assert_eq!(canonical_arg_hash(&json!({ "x": n as f64 })), canonical_arg_hash(&json!({ "x": n })));
    }

    #[test]
    fn signature_ignores_payloads(seed in any::<u64>(), fail in any::<bool>()) {
        let mut r = rng(seed);
        let st = if fail { Status::Fail } else { Status::Success };
        let a = Event::tool_call("s", 0, "search", st, random_payload(&mut r, 3), random_payload(&mut r, 3), 0, 1);
        let mut b = a.clone();
        b.args = random_payload(&mut r, 3);
        b.result = random_payload(&mut r, 3);
        prop_assert_eq!(signature_of(&a).unwrap(), signature_of(&b).unwrap());
    }

    #[test]
    fn ingestion_is_idempotent(seed in any::<u64>(), threshold in 1u64..10_000) {
        let mut r = rng(seed);
        let mut events = Vec::new();
        for s in 0..r.random_range(1..5) {
            let mut t = 0;
            for i in 0..r.random_range(1..30) {
                t += r.random_range(0..3 * threshold);
                events.push(Event::tool_call(format!("x{s}"), i, "t", Status::Success, json!({ "i": i }), json!(null), t, t + 1));
            }
        }
        // Interleave sessions in a random order.
        for i in (1..events.len()).rev() {
            let j = r.random_range(0..=i);
            events.swap(i, j);
        }
        let text = jsonl(&events) + "not json\n";
        let cfg = IngestConfig { inactivity_threshold_ms: threshold };
        let a = ingest_trace(text.as_bytes(), &cfg).unwrap();
        let b = ingest_trace(text.as_bytes(), &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.errors.len(), 1);
        prop_assert_eq!(a.event_count(), events.len());
        for s in &a.sessions {
            prop_assert!(s.events.windows(2).all(|w| (w[0].t_start, w[0].seq) <= (w[1].t_start, w[1].seq)));
        }
    }
}
