mod common;

use common::*;
use proptest::prelude::*;
use serde_json::json;
use spectool_core::event::{Event, EventSignature, Session, Status};
use spectool_core::mapping::{
    ArgBinding, Lookup, MappingExpr, Normalization, PathStep, Source, TemplatePart, ValueMapping,
};
use spectool_core::matching::MatchMode;
use spectool_core::miner::{
    mine, mine_frequent_subsequences, validate, MiningConfig, PatternPool, PatternTuple, PoolConfig,
};
use std::collections::BTreeMap;

fn key(k: &str) -> PathStep {
    PathStep::Key(k.into())
}

#[test]
fn prefixspan_small_example() {
    let w = vec![vec!["A", "B"], vec!["A", "C"], vec!["A", "B"]];
    let got: BTreeMap<Vec<&str>, usize> = mine_frequent_subsequences(&w, 2, 3)
        .into_iter()
        .map(|f| (f.items, f.support))
        .collect();
    let want: BTreeMap<Vec<&str>, usize> =
        [(vec!["A"], 3), (vec!["B"], 2), (vec!["A", "B"], 2)].into_iter().collect();
    assert_eq!(got, want);
}

#[test]
fn prefixspan_matches_exhaustive_enumeration() {
    use rand::Rng;
    for seed in 0..20 {
        let mut r = rng(seed);
        let windows: Vec<Vec<u8>> = (0..50)
            .map(|_| (0..r.random_range(0..=5)).map(|_| r.random_range(0..3u8)).collect())
            .collect();
        let sigma = r.random_range(1..=6);
        let got: BTreeMap<Vec<u8>, usize> = mine_frequent_subsequences(&windows, sigma, 3)
            .into_iter()
            .map(|f| (f.items, f.support))
            .collect();
        let mut want = BTreeMap::new();
        let alphabet: Vec<u8> = vec![0, 1, 2];
        let mut layer: Vec<Vec<u8>> = vec![vec![]];
        for _ in 0..3 {
            let mut next = Vec::new();
            for p in &layer {
                for a in &alphabet {
                    let mut q = p.clone();
                    q.push(*a);
                    let sup = windows.iter().filter(|w| is_subsequence(&q, w)).count();
                    if sup >= sigma {
                        want.insert(q.clone(), sup);
                    }
                    next.push(q);
                }
            }
            layer = next;
        }
        assert_eq!(got, want, "seed {seed}");
    }
}

fn compare_with_reference(seqs: &[Vec<Sig>], cfg: &MiningConfig) {
    let traces = payload_free_sessions(seqs);
    let mut got: Vec<(Vec<Sig>, String, f64, usize)> = mine(&traces, cfg)
        .into_iter()
        .map(|p| {
            let ctx = p.context.into_iter().map(|c| (c.tool_type, c.status)).collect();
            (ctx, p.target, p.p, p.support)
        })
        .collect();
    let mut want: Vec<(Vec<Sig>, String, f64, usize)> = brute_force_mine(seqs, cfg.k, cfg.sigma, cfg.tau, cfg.match_mode)
        .into_iter()
        .map(|r| {
            let p = r.p();
            (r.context, r.target, p, r.support)
        })
        .collect();
    let order = |a: &(Vec<Sig>, String, f64, usize), b: &(Vec<Sig>, String, f64, usize)| {
        (&a.1, &a.0).cmp(&(&b.1, &b.0))
    };
    got.sort_by(order);
    want.sort_by(order);
    assert_eq!(got, want);
}

#[test]
fn mine_equals_reference_miner_on_random_corpora() {
    use rand::Rng;
    for seed in 0..25 {
        let mut r = rng(1000 + seed);
        let tools = r.random_range(1..=4);
        let n = r.random_range(5..=60);
        let seqs = random_sequences(&mut r, tools, n, 8, 0.2);
        let cfg = MiningConfig {
            k: r.random_range(1..=3),
            sigma: r.random_range(1..=5),
            tau: [0.1, 0.3, 0.5, 0.8, 1.0][r.random_range(0..5)],
            match_mode: if seed % 2 == 0 { MatchMode::Embedded } else { MatchMode::Contiguous },
            ..MiningConfig::default()
        };
        compare_with_reference(&seqs, &cfg);
    }
}

#[test]
fn mining_output_order_is_documented_order() {
    let mut r = rng(5);
    let seqs = random_sequences(&mut r, 3, 40, 8, 0.1);
    let pats = mine(&payload_free_sessions(&seqs), &MiningConfig { sigma: 2, tau: 0.2, ..Default::default() });
    for w in pats.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let ka = (-a.p, std::cmp::Reverse(a.context.len()), &a.target, &a.context);
        let kb = (-b.p, std::cmp::Reverse(b.context.len()), &b.target, &b.context);
        assert!(ka.partial_cmp(&kb) != Some(std::cmp::Ordering::Greater));
    }
}

/// Search followed by a fetch of `list[0].url` in every session.
fn search_fetch_traces(n: usize, follow: impl Fn(usize) -> bool) -> Vec<Session> {
    (0..n)
        .map(|i| {
            let list = json!([{ "url": format!("https://a{i}.example/x") }, { "url": format!("https://b{i}.example/y") }]);
            let mut ev = vec![Event::tool_call(
                format!("s{i}"),
                0,
                "search",
                Status::Success,
                json!({ "query": format!("q{i}") }),
                json!({ "list": list }),
                0,
                10,
            )];
            let url = if follow(i) {
                format!("https://a{i}.example/x")
            } else {
                format!("https://elsewhere{i}.example/")
            };
            ev.push(Event::tool_call(
                format!("s{i}"),
                1,
                "web_fetch",
                Status::Success,
                json!({ "url": url }),
                json!({ "content": "..." }),
                20,
                30,
            ));
            Session::new(format!("s{i}"), ev)
        })
        .collect()
}

fn first_url() -> MappingExpr {
    MappingExpr::PathLookup(Lookup {
        ctx: 0,
        src: Source::Result,
        path: vec![key("list"), PathStep::Index(0), key("url")],
    })
}

#[test]
fn deterministic_search_fetch_mines_p1() {
    let traces = search_fetch_traces(30, |_| true);
    let pats = mine(&traces, &MiningConfig::default());
    let p1 = pats
        .iter()
        .find(|p| p.target == "web_fetch" && p.context == vec![EventSignature::success("search")])
        .expect("P1 mined");
    assert_eq!(p1.p, 1.0);
    assert_eq!(p1.mapping, Some(ValueMapping::single("url", first_url())));
}

#[test]
fn validate_counts_mapping_hits_over_matches() {
    let traces = search_fetch_traces(96, |i| i % 4 != 3);
    let follow = (0..96).filter(|i| i % 4 != 3).count();
    assert_eq!(follow, 72);
    let f = ValueMapping::single("url", first_url());
    let v = validate(
        &[EventSignature::success("search")],
        "web_fetch",
        Some(&f),
        &traces,
        MatchMode::Embedded,
        3,
    );
    assert_eq!((v.hits, v.matches), (72, 96));
    assert_eq!(v.p, 0.75);
}

fn arb_sig() -> impl Strategy<Value = EventSignature> {
    ("[a-e]{1,6}", any::<bool>()).prop_map(|(t, ok)| EventSignature {
        tool_type: t,
        status: if ok { Status::Success } else { Status::Fail },
    })
}

fn arb_path() -> impl Strategy<Value = Vec<PathStep>> {
    prop::collection::vec(
        prop_oneof![(0usize..5).prop_map(PathStep::Index), "[a-z]{1,5}".prop_map(PathStep::Key)],
        1..4,
    )
}

fn arb_lookup(ctx_len: usize) -> impl Strategy<Value = Lookup> {
    (0..ctx_len, any::<bool>(), arb_path()).prop_map(|(ctx, r, path)| Lookup {
        ctx,
        src: if r { Source::Result } else { Source::Args },
        path,
    })
}

fn arb_expr(ctx_len: usize) -> impl Strategy<Value = MappingExpr> {
    prop_oneof![
        arb_lookup(ctx_len).prop_map(MappingExpr::PathLookup),
        (0..ctx_len, any::<bool>(), arb_path(), 0usize..3, prop::collection::vec("[a-z]{1,4}".prop_map(PathStep::Key), 0..2), "[a-e]{1,4}")
            .prop_map(|(ctx, r, prefix, start, suffix, counted_tool)| MappingExpr::IndexedFallback {
                ctx,
                src: if r { Source::Result } else { Source::Args },
                prefix,
                start,
                suffix,
                counted_tool,
            }),
        ("[ -~]{0,8}", arb_lookup(ctx_len), "[ -~]{0,8}", 0..3u8).prop_map(|(pre, hole, post, n)| {
            MappingExpr::FormatTemplate {
                parts: vec![TemplatePart::Lit(pre), TemplatePart::Hole(hole), TemplatePart::Lit(post)],
                normalize: [Normalization::None, Normalization::Trim, Normalization::Lowercase][n as usize],
            }
        }),
    ]
}

fn arb_tuple() -> impl Strategy<Value = PatternTuple> {
    prop::collection::vec(arb_sig(), 1..4).prop_flat_map(|context| {
        let n = context.len();
        (
            Just(context),
            "[a-e]{1,6}",
            prop::option::of((
                prop::collection::vec(("[a-z]{1,6}", arb_expr(n)), 0..3),
                prop::collection::vec("[a-z]{1,6}", 0..2),
            )),
            1u32..=1000,
            0usize..10_000,
        )
            .prop_map(|(context, target, m, p, support)| PatternTuple {
                context,
                target,
                mapping: m.map(|(b, unmapped)| ValueMapping {
                    bindings: b.into_iter().map(|(arg, expr)| ArgBinding { arg, expr }).collect(),
                    unmapped,
                }),
                p: f64::from(p) / 1000.0,
                support,
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn pool_reserializes_byte_identically(patterns in prop::collection::vec(arb_tuple(), 1000..=1000)) {
        let pool = PatternPool::new(PoolConfig { k: 3, sigma: 5, tau: 0.5, match_mode: MatchMode::Embedded }, patterns);
        let text = pool.to_json();
        let back = PatternPool::from_json(&text).unwrap();
        prop_assert_eq!(&back, &pool);
        prop_assert_eq!(back.to_json(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mined_patterns_clear_thresholds_by_independent_count(
        seed in any::<u64>(),
        tools in 1usize..=4,
        k in 1usize..=3,
        sigma in 1usize..=6,
        tau_pct in 1u32..=100,
    ) {
        let mut r = rng(seed);
        let seqs = random_sequences(&mut r, tools, 30, 7, 0.25);
        let traces = payload_free_sessions(&seqs);
        let cfg = MiningConfig { k, sigma, tau: f64::from(tau_pct) / 100.0, ..Default::default() };
        let a = mine(&traces, &cfg);
        prop_assert_eq!(&a, &mine(&traces, &cfg));
        for p in &a {
            let ctx: Vec<Sig> = p.context.iter().map(|c| (c.tool_type.clone(), c.status)).collect();
            let (mut matches, mut hits, mut support) = (0usize, 0usize, 0usize);
            for s in &seqs {
                for i in 0..s.len() {
                    if oracle_matches(&ctx, s, i, cfg.match_mode, k) {
                        matches += 1;
                        hits += usize::from(s.get(i + 1).is_some_and(|n| n.0 == p.target));
                    }
                    if i > 0 && s[i].0 == p.target && is_subsequence(&ctx, &s[i.saturating_sub(k)..i]) {
                        support += 1;
                    }
                }
            }
            prop_assert_eq!(support, p.support);
            prop_assert!(support >= sigma);
            prop_assert_eq!(p.p, hits as f64 / matches as f64);
            prop_assert!(p.p >= cfg.tau);
        }
    }
}

#[test]
fn motif_corpus_pattern_count_matches_reference() {
    // Payload-free projection of a motif corpus: structure only.
    use spectool_core::sim::{default_tools, generate_corpus, Motif, MotifMix};
    let mix = MotifMix::new(vec![(Motif::edit_verify(), 1.0), (Motif::locate_examine(), 1.0)]);
    let c = generate_corpus(&mix, &default_tools(), 60, 8);
    let seqs: Vec<Vec<Sig>> = c
        .sessions
        .iter()
        .map(|x| x.tool_calls().map(|e| (e.tool_type.clone(), e.status)).collect())
        .collect();
    let cfg = MiningConfig { k: 2, sigma: 5, tau: 0.3, ..Default::default() };
    let got = mine(&payload_free_sessions(&seqs), &cfg);
    let want = brute_force_mine(&seqs, 2, 5, 0.3, MatchMode::Embedded);
    assert_eq!(got.len(), want.len());
    assert!(!got.is_empty());
}
