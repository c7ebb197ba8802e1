use std::fs;
use std::path::{Path, PathBuf};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use vmuckle::handshake::Role;
use vmuckle::hakelab::{
    generate_trace, honest_stage, parse_trace, AdversaryQuery, Answer, Experiment, LabConfig, Pi, Trace,
    TraceItem, TraceProfile,
};

fn fixture_dir(sub: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/hakelab").join(sub)
}

fn traces(sub: &str) -> Vec<(String, Trace)> {
    let mut out: Vec<_> = fs::read_dir(fixture_dir(sub))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "trace"))
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let trace = parse_trace(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
            (name, trace)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn assert_replays(sub: &str, at_least: usize) {
    let all = traces(sub);
    assert!(all.len() >= at_least, "only {} traces in {sub:?}", all.len());
    for (name, trace) in all {
        let replay = trace.replay().unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(!replay.verdicts.is_empty(), "{name} checks nothing");
        for v in &replay.verdicts {
            assert!(v.passed(), "{name}: {} evaluated to {}", v.expectation, v.actual);
        }
    }
}

#[test]
fn hand_evaluated_cleanness_fixtures() {
    assert_replays("", 12);
}

#[test]
fn query_semantics_fixtures() {
    assert_replays("semantics", 5);
}

#[test]
fn fixtures_cover_every_predicate_outcome() {
    let mut seen = std::collections::BTreeSet::new();
    for (_, trace) in traces("") {
        for item in &trace.items {
            if let TraceItem::Expect(x) = item {
                let kind = x.to_string().split_whitespace().nth(1).unwrap().to_owned();
                seen.insert((kind, x.expected()));
            }
        }
    }
    for kind in ["clean-vm", "clean-cvm", "matching", "origin", "prefix"] {
        assert!(seen.contains(&(kind.to_owned(), true)), "{kind} #t");
        assert!(seen.contains(&(kind.to_owned(), false)), "{kind} #f");
    }
}

fn honest_pair(config: LabConfig) -> (Experiment, Pi, Pi) {
    let mut e = Experiment::new(config).unwrap();
    let create = |e: &mut Experiment, party, partner, role| {
        let q = AdversaryQuery::Create { party, partner, role, session: None };
        match e.dispatch(q).unwrap() {
            Answer::Session(s) => Pi::new(party, s),
            other => panic!("create answered {other}"),
        }
    };
    let a = create(&mut e, 1, 2, Role::Initiator);
    let b = create(&mut e, 2, 1, Role::Responder);
    (e, a, b)
}

fn run_stage(e: &mut Experiment, a: Pi, b: Pi) {
    for q in honest_stage(a, b) {
        assert!(!e.dispatch(q).unwrap().is_bottom());
    }
}

#[test]
fn test_with_real_bit_returns_partner_master_secret() {
    let (mut e, a, b) = honest_pair(LabConfig { test_bit: Some(true), ..Default::default() });
    run_stage(&mut e, a, b);
    let Answer::Key(k) = e.dispatch(AdversaryQuery::Test { pi: a, stage: 1 }).unwrap() else {
        panic!("test answered ⊥");
    };
    let partner = e.session(b).unwrap().stage_record(1).unwrap().output.clone().unwrap();
    assert_eq!(k, partner.ms);
    assert_eq!(k.len(), e.key_len());
}

#[test]
fn test_with_random_bit_returns_fresh_key() {
    let (mut e, a, b) = honest_pair(LabConfig { test_bit: Some(false), ..Default::default() });
    run_stage(&mut e, a, b);
    let Answer::Key(k) = e.dispatch(AdversaryQuery::Test { pi: a, stage: 1 }).unwrap() else {
        panic!("test answered ⊥");
    };
    let own = e.session(a).unwrap().last_output().unwrap().ms.clone();
    assert_ne!(k, own);
    assert_eq!(k.len(), own.len());
}

#[test]
fn reveal_returns_stage_keys() {
    let (mut e, a, b) = honest_pair(LabConfig::default());
    run_stage(&mut e, a, b);
    run_stage(&mut e, a, b);
    let Answer::Keys(keys) = e.dispatch(AdversaryQuery::Reveal { pi: b, stage: 1 }).unwrap() else {
        panic!("reveal answered ⊥");
    };
    let out = e.session(a).unwrap().stage_record(1).unwrap().output.clone().unwrap();
    let names: Vec<_> = keys.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, ["ms", "cats", "sats"]);
    assert_eq!(keys[0].1, out.ms);
    assert_eq!(keys[1].1, out.cats);
    assert_eq!(keys[2].1, out.sats);
}

#[test]
fn accept_order_matches_protocol() {
    let (mut e, a, b) = honest_pair(LabConfig::default());
    let qs = honest_stage(a, b);
    let (head, last) = qs.split_at(qs.len() - 1);
    for q in head {
        e.dispatch(q.clone()).unwrap();
    }
    // The initiator accepted on m5; the responder waits for m8.
    assert!(e.dispatch(AdversaryQuery::Reveal { pi: a, stage: 1 }).unwrap() != Answer::Bottom);
    assert!(e.dispatch(AdversaryQuery::Reveal { pi: b, stage: 1 }).unwrap().is_bottom());
    e.dispatch(last[0].clone()).unwrap();
    assert!(e.dispatch(AdversaryQuery::Reveal { pi: b, stage: 1 }).unwrap() != Answer::Bottom);
}

/// A guessing adversary that never touches secrets wins about half the time.
#[test]
fn random_guess_sanity() {
    const RUNS: u64 = 10_000;
    let mut guesser = ChaCha20Rng::seed_from_u64(0x5eed);
    let mut wins = 0u64;
    for seed in 0..RUNS {
        let config = LabConfig { sessions: 1, stages: 1, seed, test_bit: None, ..Default::default() };
        let (mut e, a, b) = honest_pair(config);
        run_stage(&mut e, a, b);
        assert!(!e.dispatch(AdversaryQuery::Test { pi: a, stage: 1 }).unwrap().is_bottom());
        assert!(e.clean_vm(a, 1));
        if guesser.gen::<bool>() == e.test_bit() {
            wins += 1;
        }
    }
    let rate = wins as f64 / RUNS as f64;
    assert!((0.48..=0.52).contains(&rate), "success rate {rate}");
}

fn all_targets(e: &Experiment) -> Vec<(Pi, u32)> {
    let stages = e.config().stages;
    e.session_ids().flat_map(|pi| (1..=stages).map(move |t| (pi, t))).collect()
}

fn revealed(e: &Experiment, pi: Pi, stage: u32) -> bool {
    e.log().iter().any(|l| l.query == AdversaryQuery::Reveal { pi, stage })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 1000, ..ProptestConfig::default() })]

    #[test]
    fn reveal_is_never_clean(seed in any::<u64>()) {
        let trace = generate_trace(&TraceProfile::default(), seed);
        let e = trace.replay().unwrap().experiment;
        for (pi, t) in all_targets(&e) {
            if revealed(&e, pi, t) {
                prop_assert!(!e.clean_vm(pi, t));
                prop_assert!(!e.clean_cvm(pi, t));
            }
        }
    }

    #[test]
    fn adding_a_reveal_makes_the_target_unclean(seed in any::<u64>(), pick in any::<prop::sample::Index>(), at in any::<prop::sample::Index>()) {
        let mut trace = generate_trace(&TraceProfile::default(), seed);
        let targets = all_targets(&trace.replay().unwrap().experiment);
        prop_assume!(!targets.is_empty());
        let (pi, stage) = targets[pick.index(targets.len())];
        let pos = at.index(trace.items.len() + 1);
        trace.items.insert(pos, TraceItem::Query(AdversaryQuery::Reveal { pi, stage }));
        let e = trace.replay().unwrap().experiment;
        prop_assert!(!e.clean_vm(pi, stage));
        prop_assert!(!e.clean_cvm(pi, stage));
    }

    #[test]
    fn clean_vm_implies_clean_cvm(seed in any::<u64>()) {
        let trace = generate_trace(&TraceProfile::default(), seed);
        let e = trace.replay().unwrap().experiment;
        for (pi, t) in all_targets(&e) {
            prop_assert!(!e.clean_vm(pi, t) || e.clean_cvm(pi, t), "{pi} stage {t}");
        }
    }

    #[test]
    fn matching_is_symmetric_and_implies_origin(seed in any::<u64>()) {
        let e = generate_trace(&TraceProfile::default(), seed).replay().unwrap().experiment;
        let ids: Vec<Pi> = e.session_ids().collect();
        for &a in &ids {
            for &b in &ids {
                for t in 1..=e.config().stages {
                    prop_assert_eq!(e.matching(a, b, t), e.matching(b, a, t));
                    if e.matching(a, b, t) {
                        prop_assert!(e.origin(a, b, t));
                    }
                }
            }
        }
    }

    #[test]
    fn trace_text_round_trips(seed in any::<u64>()) {
        let trace = generate_trace(&TraceProfile::default(), seed);
        prop_assert_eq!(parse_trace(&trace.to_string()).unwrap(), trace);
    }
}

/// The generator must reach both verdicts or the properties above are vacuous.
#[test]
fn generated_traces_are_mixed() {
    let (mut clean, mut unclean, mut cvm_only) = (0, 0, 0);
    for seed in 0..200 {
        let e = generate_trace(&TraceProfile::default(), seed).replay().unwrap().experiment;
        for (pi, t) in all_targets(&e) {
            match (e.clean_vm(pi, t), e.clean_cvm(pi, t)) {
                (true, _) => clean += 1,
                (false, true) => cvm_only += 1,
                (false, false) => unclean += 1,
            }
        }
    }
    assert!(clean > 0 && unclean > 0 && cvm_only > 0, "{clean} {cvm_only} {unclean}");
}
