//! Executable bookkeeping of the HAKE security experiment.
//!
//! An [`Experiment`] holds `n_P` parties with long-term keys, runs real
//! handshake [`Session`](crate::handshake::Session)s on behalf of an
//! adversary that talks to it through [`AdversaryQuery`]s, and logs every
//! query. The cleanness predicates and the matching/origin relations are then
//! evaluated retrospectively over that log.
//!
//! Parties, sessions and stages are numbered from 1. The lab runs
//! TestKEM-32 for both KEMs and TestDSS leaves under a TestDSS/Ed25519 CA, so
//! thousands of experiments run in seconds. Nothing here is a proof; it only
//! checks that traces and predicate evaluations behave as defined.

use std::fmt;

use crate::handshake::Role;
use crate::Secret;

mod experiment;
mod generate;
mod predicates;
mod trace;

pub use experiment::{Experiment, LabConfig, LabError, LogEntry};
pub use generate::{generate_trace, TraceProfile};
pub use trace::{honest_stage, parse_trace, Expectation, Relation, Replay, Trace, TraceError, TraceItem, Verdict};

/// `π_i^s`: session `s` of party `i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Pi {
    pub party: usize,
    pub session: usize,
}

impl Pi {
    pub fn new(party: usize, session: usize) -> Self {
        Pi { party, session }
    }
}

impl fmt::Display for Pi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.party, self.session)
    }
}

/// Long-term keys of a party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LongTermKey {
    /// Pre-shared keys.
    Sk,
    /// Post-quantum signing key.
    Qk,
    /// Classical signing key.
    Ck,
}

/// Per-stage ephemeral secrets of a session.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EphemeralKey {
    /// Post-quantum KEM secret.
    Qk,
    /// Classical KEM secret.
    Ck,
    /// QKD key.
    Sk,
    /// SecState consumed by the stage.
    Ss,
}

impl LongTermKey {
    fn name(self) -> &'static str {
        match self {
            LongTermKey::Sk => "corrupt-sk",
            LongTermKey::Qk => "corrupt-qk",
            LongTermKey::Ck => "corrupt-ck",
        }
    }
}

impl EphemeralKey {
    fn name(self) -> &'static str {
        match self {
            EphemeralKey::Qk => "compromise-qk",
            EphemeralKey::Ck => "compromise-ck",
            EphemeralKey::Sk => "compromise-sk",
            EphemeralKey::Ss => "compromise-ss",
        }
    }
}

/// What the adversary hands to `Send`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SendInput {
    /// Ask an initiator to begin its next stage.
    Start,
    /// Message `m_index` as sent by `from` in `stage` (default: its latest).
    Relay { from: Pi, index: u8, stage: Option<u32> },
    /// `inner` with byte `pos % len` XORed with `mask`.
    Tamper { inner: Box<SendInput>, pos: usize, mask: u8 },
    Bytes(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AdversaryQuery {
    /// `session: None` takes the next free session number.
    Create { party: usize, partner: usize, role: Role, session: Option<usize> },
    Send { to: Pi, input: SendInput },
    Reveal { pi: Pi, stage: u32 },
    Test { pi: Pi, stage: u32 },
    Corrupt { key: LongTermKey, party: usize },
    Compromise { key: EphemeralKey, pi: Pi, stage: u32 },
}

impl fmt::Display for SendInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SendInput::Start => f.write_str("start"),
            SendInput::Relay { from, index, stage: None } => write!(f, "(relay {from} {index})"),
            SendInput::Relay { from, index, stage: Some(t) } => write!(f, "(relay {from} {index} {t})"),
            SendInput::Tamper { inner, pos, mask } => write!(f, "(tamper {inner} {pos} {mask})"),
            SendInput::Bytes(b) => write!(f, "(hex \"{}\")", hex::encode(b)),
        }
    }
}

impl fmt::Display for AdversaryQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdversaryQuery::Create { party, partner, role, session: None } => {
                write!(f, "(create {party} {partner} {role})")
            }
            AdversaryQuery::Create { party, partner, role, session: Some(s) } => {
                write!(f, "(create {party} {partner} {role} {s})")
            }
            AdversaryQuery::Send { to, input } => write!(f, "(send {to} {input})"),
            AdversaryQuery::Reveal { pi, stage } => write!(f, "(reveal {pi} {stage})"),
            AdversaryQuery::Test { pi, stage } => write!(f, "(test {pi} {stage})"),
            AdversaryQuery::Corrupt { key, party } => write!(f, "({} {party})", key.name()),
            AdversaryQuery::Compromise { key, pi, stage } => write!(f, "({} {pi} {stage})", key.name()),
        }
    }
}

/// Challenger's reply. `Bottom` is the distinguished `⊥`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Answer {
    Bottom,
    Session(usize),
    Messages(Vec<Vec<u8>>),
    /// The message was consumed and the session rejected the stage.
    Rejected(&'static str),
    Key(Secret),
    Keys(Vec<(String, Secret)>),
}

impl Answer {
    pub fn is_bottom(&self) -> bool {
        matches!(self, Answer::Bottom)
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Answer::Bottom => f.write_str("⊥"),
            Answer::Session(s) => write!(f, "session {s}"),
            Answer::Messages(ms) => {
                let lens: Vec<String> = ms.iter().map(|m| format!("{}B", m.len())).collect();
                write!(f, "{} message(s) [{}]", ms.len(), lens.join(" "))
            }
            Answer::Rejected(reason) => write!(f, "rejected ({reason})"),
            Answer::Key(k) => write!(f, "key {}…", k.fingerprint()),
            Answer::Keys(ks) => {
                let parts: Vec<String> = ks.iter().map(|(n, k)| format!("{n}={}…", k.fingerprint())).collect();
                write!(f, "keys {}", parts.join(" "))
            }
        }
    }
}
