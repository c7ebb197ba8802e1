use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use super::trace::{honest_stage, Trace, TraceItem};
use super::{AdversaryQuery, EphemeralKey, LabConfig, LongTermKey, Pi, SendInput};
use crate::handshake::{AuthMode, Role};

/// Shape and per-step probabilities of generated traces.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceProfile {
    pub parties: usize,
    pub sessions: usize,
    pub stages: u32,
    pub mode: AuthMode,
    /// Chance of an adversary query before each protocol message.
    pub p_query: f64,
    /// Relative weights of Reveal, Compromise and Corrupt among those queries.
    pub weights: [u32; 3],
    pub p_drop: f64,
    pub p_tamper: f64,
    /// Chance that the trace ends with a Test.
    pub p_test: f64,
}

impl Default for TraceProfile {
    fn default() -> Self {
        TraceProfile {
            parties: 3,
            sessions: 2,
            stages: 3,
            mode: AuthMode::Both,
            p_query: 0.15,
            weights: [1, 4, 2],
            p_drop: 0.03,
            p_tamper: 0.02,
            p_test: 0.8,
        }
    }
}

/// A random but well-formed trace. The seed also seeds the experiment, so
/// `(profile, seed)` reproduces the whole run.
pub fn generate_trace(profile: &TraceProfile, seed: u64) -> Trace {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let config = LabConfig {
        parties: profile.parties,
        sessions: profile.sessions,
        stages: profile.stages,
        mode: profile.mode,
        seed,
        test_bit: Some(rng.gen()),
    };
    let mut items = Vec::new();
    let mut next = vec![1usize; profile.parties + 1];
    let mut pairs = Vec::new();
    for _ in 0..profile.sessions {
        let i = rng.gen_range(1..=profile.parties);
        let mut j = rng.gen_range(1..profile.parties);
        if j >= i {
            j += 1;
        }
        if next[i] > profile.sessions || next[j] > profile.sessions {
            continue;
        }
        let (a, b) = (Pi::new(i, next[i]), Pi::new(j, next[j]));
        next[i] += 1;
        next[j] += 1;
        items.push(query(AdversaryQuery::Create { party: i, partner: j, role: Role::Initiator, session: Some(a.session) }));
        items.push(query(AdversaryQuery::Create { party: j, partner: i, role: Role::Responder, session: Some(b.session) }));
        pairs.push((a, b));
    }
    let sessions: Vec<Pi> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();

    for _ in 1..=profile.stages {
        for &(init, resp) in &pairs {
            for q in honest_stage(init, resp) {
                if rng.gen_bool(profile.p_query) {
                    items.push(query(random_query(&mut rng, profile, &sessions)));
                }
                if rng.gen_bool(profile.p_drop) {
                    continue;
                }
                let q = match q {
                    AdversaryQuery::Send { to, input } if rng.gen_bool(profile.p_tamper) => AdversaryQuery::Send {
                        to,
                        input: SendInput::Tamper { inner: Box::new(input), pos: rng.gen(), mask: rng.gen_range(1..=255) },
                    },
                    q => q,
                };
                items.push(query(q));
            }
        }
    }
    if let Some(&pi) = sessions.choose(&mut rng) {
        if rng.gen_bool(profile.p_test) {
            items.push(query(AdversaryQuery::Test { pi, stage: rng.gen_range(1..=profile.stages) }));
        }
    }
    Trace { config, items }
}

fn query(q: AdversaryQuery) -> TraceItem {
    TraceItem::Query(q)
}

fn random_query(rng: &mut ChaCha20Rng, profile: &TraceProfile, sessions: &[Pi]) -> AdversaryQuery {
    let total: u32 = profile.weights.iter().sum();
    let mut pick = rng.gen_range(0..total.max(1));
    let kind = profile.weights.iter().position(|&w| {
        let hit = pick < w;
        pick = pick.saturating_sub(w);
        hit
    });
    let pi = *sessions.choose(rng).unwrap_or(&Pi::new(1, 1));
    let stage = rng.gen_range(1..=profile.stages);
    match kind {
        Some(0) => AdversaryQuery::Reveal { pi, stage },
        Some(1) => {
            let key = *[EphemeralKey::Qk, EphemeralKey::Ck, EphemeralKey::Sk, EphemeralKey::Ss].choose(rng).unwrap();
            AdversaryQuery::Compromise { key, pi, stage }
        }
        _ => {
            let key = *[LongTermKey::Sk, LongTermKey::Qk, LongTermKey::Ck].choose(rng).unwrap();
            AdversaryQuery::Corrupt { key, party: rng.gen_range(1..=profile.parties) }
        }
    }
}
