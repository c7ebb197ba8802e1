use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use super::{AdversaryQuery, Answer, EphemeralKey, LongTermKey, Pi, SendInput};
use crate::handshake::{
    AuthConfig, AuthMode, HandshakeError, QkdHandlePolicy, Role, Session, SessionConfig, Status,
};
use crate::pki::{self, CertChain, Identity, TwoLevelCa};
use crate::qkd::{QkdProvider, Simulator};
use crate::suite::{AlgorithmId, CipherSuite, HASH_LEN};
use crate::Secret;

/// Certificate clock for every lab run, so experiments are reproducible.
const LAB_NOW: u64 = 1_760_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabConfig {
    /// `n_P`
    pub parties: usize,
    /// `n_S`, per party.
    pub sessions: usize,
    /// `n_T`, per session.
    pub stages: u32,
    pub mode: AuthMode,
    pub seed: u64,
    /// The hidden bit `b`. `None` draws it from the seeded generator.
    pub test_bit: Option<bool>,
}

impl Default for LabConfig {
    fn default() -> Self {
        LabConfig { parties: 2, sessions: 2, stages: 3, mode: AuthMode::Both, seed: 0, test_bit: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabError {
    #[error("{what} {value} out of range 1..={max}")]
    IndexOutOfRange { what: &'static str, value: u64, max: u64 },
    #[error("lab setup failed: {0}")]
    Setup(String),
}

#[derive(Debug, Clone)]
pub struct LogEntry {
    pub query: AdversaryQuery,
    pub answer: Answer,
}

struct Party {
    identity: Identity,
    chain: CertChain,
}

pub(super) struct SessionSlot {
    pub(super) partner: usize,
    pub(super) session: Session,
}

/// Challenger state for one run of the experiment.
pub struct Experiment {
    config: LabConfig,
    suite: CipherSuite,
    ca: TwoLevelCa,
    parties: Vec<Party>,
    psks: BTreeMap<(usize, usize), Secret>,
    links: BTreeMap<(usize, usize), Arc<Simulator>>,
    pub(super) sessions: BTreeMap<Pi, SessionSlot>,
    pub(super) log: Vec<LogEntry>,
    /// Log index of the `Send` after which `π.[t] = accept`.
    pub(super) accepted_at: HashMap<(Pi, u32), usize>,
    test_bit: bool,
    tested: bool,
    answered: HashSet<AdversaryQuery>,
    rng: ChaCha20Rng,
}

fn pair(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn setup_err(e: impl std::fmt::Display) -> LabError {
    LabError::Setup(e.to_string())
}

impl Experiment {
    /// Creates every party's long-term keys and draws the test bit.
    pub fn new(config: LabConfig) -> Result<Self, LabError> {
        if config.parties < 2 || config.sessions < 1 || config.stages < 1 {
            return Err(LabError::Setup("need at least 2 parties, 1 session and 1 stage".into()));
        }
        let suite = CipherSuite::new("TestKEM-32", "TestKEM-32", "TestDSS").map_err(setup_err)?;
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let test_dss = AlgorithmId::signature("TestDSS").map_err(setup_err)?;
        let ed25519 = AlgorithmId::signature(pki::CLASSICAL_ALG).map_err(setup_err)?;
        let ca = TwoLevelCa::generate_with(test_dss, ed25519, LAB_NOW, &mut rng).map_err(setup_err)?;

        let mut parties = Vec::with_capacity(config.parties);
        for i in 1..=config.parties {
            let (identity, chain) =
                ca.issue_leaf(&party_name(i), suite.dss, LAB_NOW, &mut rng).map_err(setup_err)?;
            parties.push(Party { identity, chain });
        }
        let mut psks = BTreeMap::new();
        let mut links = BTreeMap::new();
        for a in 1..=config.parties {
            for b in a + 1..=config.parties {
                let mut psk = [0u8; 32];
                rng.fill_bytes(&mut psk);
                psks.insert((a, b), Secret::from(psk));
                let mut seed = [0u8; 32];
                rng.fill_bytes(&mut seed);
                let sim = Simulator::new(&seed, link_name(a, b)).map_err(setup_err)?;
                links.insert((a, b), Arc::new(sim));
            }
        }
        let test_bit = config.test_bit.unwrap_or_else(|| rng.next_u32() & 1 == 1);
        Ok(Experiment {
            config,
            suite,
            ca,
            parties,
            psks,
            links,
            sessions: BTreeMap::new(),
            log: Vec::new(),
            accepted_at: HashMap::new(),
            test_bit,
            tested: false,
            answered: HashSet::new(),
            rng,
        })
    }

    pub fn config(&self) -> &LabConfig {
        &self.config
    }

    pub fn test_bit(&self) -> bool {
        self.test_bit
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn session(&self, pi: Pi) -> Option<&Session> {
        self.sessions.get(&pi).map(|s| &s.session)
    }

    /// The partner `pid` a session was created with.
    pub fn partner(&self, pi: Pi) -> Option<usize> {
        self.sessions.get(&pi).map(|s| s.partner)
    }

    pub fn session_ids(&self) -> impl Iterator<Item = Pi> + '_ {
        self.sessions.keys().copied()
    }

    /// Answers one query and appends it to the log. Index errors are not logged.
    pub fn dispatch(&mut self, query: AdversaryQuery) -> Result<Answer, LabError> {
        self.check_indices(&query)?;
        let answer = self.answer(&query);
        if !answer.is_bottom() && is_once_only(&query) {
            self.answered.insert(query.clone());
        }
        self.log.push(LogEntry { query, answer: answer.clone() });
        Ok(answer)
    }

    fn check_indices(&self, q: &AdversaryQuery) -> Result<(), LabError> {
        let party = |v: usize| range("party", v as u64, self.config.parties as u64);
        let session = |v: usize| range("session", v as u64, self.config.sessions as u64);
        let stage = |v: u32| range("stage", v as u64, self.config.stages as u64);
        let pi = |p: &Pi| party(p.party).and_then(|_| session(p.session));
        match q {
            AdversaryQuery::Create { party: i, partner, session: s, .. } => {
                party(*i)?;
                party(*partner)?;
                s.map_or(Ok(()), session)
            }
            AdversaryQuery::Send { to, input } => {
                pi(to)?;
                let mut input = input;
                loop {
                    match input {
                        SendInput::Relay { from, stage: t, .. } => {
                            pi(from)?;
                            return t.map_or(Ok(()), stage);
                        }
                        SendInput::Tamper { inner, .. } => input = inner,
                        _ => return Ok(()),
                    }
                }
            }
            AdversaryQuery::Reveal { pi: p, stage: t }
            | AdversaryQuery::Test { pi: p, stage: t }
            | AdversaryQuery::Compromise { pi: p, stage: t, .. } => {
                pi(p)?;
                stage(*t)
            }
            AdversaryQuery::Corrupt { party: i, .. } => party(*i),
        }
    }

    fn answer(&mut self, q: &AdversaryQuery) -> Answer {
        if is_once_only(q) && self.answered.contains(q) {
            return Answer::Bottom;
        }
        match q {
            AdversaryQuery::Create { party, partner, role, session } => {
                self.create(*party, *partner, *role, *session)
            }
            AdversaryQuery::Send { to, input } => self.send(*to, input),
            AdversaryQuery::Reveal { pi, stage } => match self.output(*pi, *stage) {
                Some(o) => Answer::Keys(vec![
                    ("ms".into(), o.ms.clone()),
                    ("cats".into(), o.cats.clone()),
                    ("sats".into(), o.sats.clone()),
                ]),
                None => Answer::Bottom,
            },
            AdversaryQuery::Test { pi, stage } => {
                if self.tested {
                    return Answer::Bottom;
                }
                let Some(ms) = self.output(*pi, *stage).map(|o| o.ms.clone()) else {
                    return Answer::Bottom;
                };
                self.tested = true;
                if self.test_bit {
                    Answer::Key(ms)
                } else {
                    let mut k = vec![0u8; ms.len()];
                    self.rng.fill_bytes(&mut k);
                    Answer::Key(Secret::new(k))
                }
            }
            AdversaryQuery::Corrupt { key, party } => self.corrupt(*key, *party),
            AdversaryQuery::Compromise { key, pi, stage } => {
                let Some(rec) = self.session(*pi).and_then(|s| s.stage_record(*stage)) else {
                    return Answer::Bottom;
                };
                let k = match key {
                    EphemeralKey::Qk => rec.ephemeral.pq.clone(),
                    EphemeralKey::Ck => rec.ephemeral.classical.clone(),
                    EphemeralKey::Sk => rec.ephemeral.quantum.clone(),
                    EphemeralKey::Ss => Some(rec.sec_state_in.clone()),
                };
                k.map_or(Answer::Bottom, Answer::Key)
            }
        }
    }

    fn output(&self, pi: Pi, stage: u32) -> Option<&crate::handshake::HandshakeOutput> {
        let rec = self.session(pi)?.stage_record(stage)?;
        match rec.status {
            Status::Accept => rec.output.as_ref(),
            _ => None,
        }
    }

    fn create(&mut self, i: usize, j: usize, role: Role, s: Option<usize>) -> Answer {
        if i == j {
            return Answer::Bottom;
        }
        let s = match s {
            Some(s) if self.sessions.contains_key(&Pi::new(i, s)) => return Answer::Bottom,
            Some(s) => s,
            None => match (1..=self.config.sessions).find(|s| !self.sessions.contains_key(&Pi::new(i, *s))) {
                Some(s) => s,
                None => return Answer::Bottom,
            },
        };
        let config = self.session_config(i, j);
        let rng = ChaCha20Rng::seed_from_u64(self.rng.next_u64());
        match Session::new(role, config, rng) {
            Ok(session) => {
                self.sessions.insert(Pi::new(i, s), SessionSlot { partner: j, session });
                Answer::Session(s)
            }
            Err(_) => Answer::Bottom,
        }
    }

    fn session_config(&self, i: usize, j: usize) -> SessionConfig {
        let me = &self.parties[i - 1];
        let mut auth = AuthConfig::default();
        if self.config.mode != AuthMode::PskOnly {
            auth = AuthConfig::certificate(me.chain.clone(), me.identity.pq.secret.clone(), self.ca.root_cert.clone());
        }
        if self.config.mode != AuthMode::DssOnly {
            auth = auth.with_psk(self.psks[&pair(i, j)].clone());
        }
        let link = pair(i, j);
        SessionConfig {
            suite: self.suite,
            auth,
            peer_id: party_name(j),
            qkd: self.links[&link].clone() as Arc<dyn QkdProvider>,
            qkd_stream: link_name(link.0, link.1),
            qkd_handles: QkdHandlePolicy::NonceDerived,
            now: Some(LAB_NOW),
        }
    }

    fn send(&mut self, to: Pi, input: &SendInput) -> Answer {
        let max_stages = self.config.stages;
        let Some(slot) = self.sessions.get(&to) else {
            return Answer::Bottom;
        };
        let session = &slot.session;
        let ready = matches!(session.status(), Status::Bottom | Status::Accept) && session.stage() < max_stages;
        let runnable = match (input, session.role(), session.status()) {
            (SendInput::Start, Role::Initiator, _) => ready,
            (SendInput::Start, Role::Responder, _) => false,
            (_, Role::Responder, Status::Bottom | Status::Accept) => ready,
            (_, _, status) => status == Status::Active,
        };
        if !runnable {
            return Answer::Bottom;
        }
        let wire = match input {
            SendInput::Start => None,
            other => match self.resolve(other) {
                Some(w) => Some(w),
                None => return Answer::Bottom,
            },
        };

        let slot = self.sessions.get_mut(&to).expect("checked above");
        let result: Result<Vec<Vec<u8>>, HandshakeError> = match wire {
            None => slot.session.start().map(|m| vec![m]),
            Some(w) => slot.session.handle(&w),
        };
        let stage = slot.session.stage();
        if slot.session.status() == Status::Accept {
            self.accepted_at.entry((to, stage)).or_insert(self.log.len());
        }
        match result {
            Ok(out) => Answer::Messages(out),
            Err(e) => Answer::Rejected(e.reason()),
        }
    }

    /// Turns a relay or tamper request into wire bytes.
    pub fn resolve(&self, input: &SendInput) -> Option<Vec<u8>> {
        match input {
            SendInput::Start => None,
            SendInput::Bytes(b) => Some(b.clone()),
            SendInput::Relay { from, index, stage } => {
                let session = self.session(*from)?;
                let rec = match stage {
                    Some(t) => session.stage_record(*t)?,
                    None => session.stages().last()?,
                };
                let pos = sent_position(session.role(), *index)?;
                rec.sent.get(pos).cloned()
            }
            SendInput::Tamper { inner, pos, mask } => {
                let mut bytes = self.resolve(inner)?;
                if bytes.is_empty() {
                    return Some(bytes);
                }
                let at = pos % bytes.len();
                bytes[at] ^= mask;
                Some(bytes)
            }
        }
    }

    fn corrupt(&self, key: LongTermKey, i: usize) -> Answer {
        let party = &self.parties[i - 1];
        let mode = self.config.mode;
        match key {
            LongTermKey::Sk if mode != AuthMode::DssOnly => Answer::Keys(
                self.psks
                    .iter()
                    .filter(|((a, b), _)| *a == i || *b == i)
                    .map(|(&(a, b), k)| (link_name(a, b), k.clone()))
                    .collect(),
            ),
            LongTermKey::Qk if mode != AuthMode::PskOnly => {
                Answer::Keys(vec![("pq".into(), party.identity.pq.secret.clone())])
            }
            LongTermKey::Ck if mode != AuthMode::PskOnly => {
                Answer::Keys(vec![("classical".into(), party.identity.classical.secret.clone())])
            }
            _ => Answer::Bottom,
        }
    }

    /// Length of the test key, the master secret.
    pub fn key_len(&self) -> usize {
        HASH_LEN
    }
}

fn is_once_only(q: &AdversaryQuery) -> bool {
    matches!(
        q,
        AdversaryQuery::Reveal { .. } | AdversaryQuery::Corrupt { .. } | AdversaryQuery::Compromise { .. }
    )
}

fn range(what: &'static str, value: u64, max: u64) -> Result<(), LabError> {
    if value == 0 || value > max {
        Err(LabError::IndexOutOfRange { what, value, max })
    } else {
        Ok(())
    }
}

/// Where `m_index` sits in a session's per-stage sent list.
fn sent_position(role: Role, index: u8) -> Option<usize> {
    match (role, index) {
        (Role::Initiator, 1) => Some(0),
        (Role::Initiator, 6..=8) => Some(index as usize - 5),
        (Role::Responder, 2..=5) => Some(index as usize - 2),
        _ => None,
    }
}

pub(super) fn party_name(i: usize) -> String {
    format!("P{i}")
}

fn link_name(a: usize, b: usize) -> String {
    format!("P{a}-P{b}")
}
