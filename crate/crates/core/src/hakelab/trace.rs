//! Text form of adversary traces.
//!
//! One s-expression per query, `;` starts a comment:
//!
//! ```text
//! (config (parties 2) (sessions 1) (stages 2) (mode both) (seed 7) (bit 1))
//! (create 1 2 init)              ; optional 4th field picks the session number
//! (create 2 1 resp)
//! (run 1 1 2 1)                  ; one honest stage, expands to nine sends
//! (send 1 1 start)
//! (send 2 1 (relay 1 1 1))       ; m1 as sent by session (1,1), latest stage
//! (send 1 1 (tamper (relay 2 1 4) 17 255))
//! (send 2 1 (hex "00ff"))
//! (reveal 1 1 1) (test 1 1 2)
//! (corrupt-sk 1) (corrupt-qk 1) (corrupt-ck 1)
//! (compromise-qk 1 1 2) (compromise-ck 1 1 2) (compromise-sk 1 1 2) (compromise-ss 1 1 2)
//! (expect bottom #t)             ; about the answer to the previous query
//! (expect clean-vm 1 1 2 #f)     ; evaluated on the complete log
//! (expect matching 1 1 2 1 2 #t) ; also origin, prefix
//! ```

use std::fmt;

use lexpr::Value;
use thiserror::Error;

use super::experiment::LogEntry;
use super::{AdversaryQuery, EphemeralKey, Experiment, LabConfig, LabError, LongTermKey, Pi, SendInput};
use crate::handshake::{AuthMode, Role};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("trace does not parse: {0}")]
    Parse(String),
    #[error("item {item}: {message}")]
    Syntax { item: usize, message: String },
    #[error(transparent)]
    Lab(#[from] LabError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Matching,
    Origin,
    Prefix,
}

impl Relation {
    fn name(self) -> &'static str {
        match self {
            Relation::Matching => "matching",
            Relation::Origin => "origin",
            Relation::Prefix => "prefix",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expectation {
    /// The previous query was answered `⊥` (or not).
    Bottom(bool),
    CleanVm { pi: Pi, stage: u32, value: bool },
    CleanCvm { pi: Pi, stage: u32, value: bool },
    Relation { relation: Relation, a: Pi, b: Pi, stage: u32, value: bool },
}

impl Expectation {
    pub fn expected(&self) -> bool {
        match self {
            Expectation::Bottom(v) => *v,
            Expectation::CleanVm { value, .. }
            | Expectation::CleanCvm { value, .. }
            | Expectation::Relation { value, .. } => *value,
        }
    }

    /// Evaluates a log-level expectation on a finished experiment.
    pub fn evaluate(&self, e: &Experiment) -> Option<bool> {
        Some(match *self {
            Expectation::Bottom(_) => return None,
            Expectation::CleanVm { pi, stage, .. } => e.clean_vm(pi, stage),
            Expectation::CleanCvm { pi, stage, .. } => e.clean_cvm(pi, stage),
            Expectation::Relation { relation: Relation::Matching, a, b, stage, .. } => e.matching(a, b, stage),
            Expectation::Relation { relation: Relation::Origin, a, b, stage, .. } => e.origin(a, b, stage),
            Expectation::Relation { relation: Relation::Prefix, a, b, stage, .. } => e.prefix_matches(a, b, stage),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceItem {
    Query(AdversaryQuery),
    Expect(Expectation),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub config: LabConfig,
    pub items: Vec<TraceItem>,
}

/// Outcome of one expectation during a replay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verdict {
    /// Position of the expectation in [`Trace::items`].
    pub item: usize,
    pub expectation: Expectation,
    pub actual: bool,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.actual == self.expectation.expected()
    }
}

pub struct Replay {
    pub experiment: Experiment,
    pub verdicts: Vec<Verdict>,
}

impl Replay {
    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(Verdict::passed)
    }
}

impl Trace {
    pub fn queries(&self) -> impl Iterator<Item = &AdversaryQuery> {
        self.items.iter().filter_map(|i| match i {
            TraceItem::Query(q) => Some(q),
            TraceItem::Expect(_) => None,
        })
    }

    /// Runs every query against a fresh experiment and checks the expectations.
    /// `(expect bottom ..)` looks at the preceding answer, the rest at the final log.
    pub fn replay(&self) -> Result<Replay, TraceError> {
        let mut experiment = Experiment::new(self.config.clone())?;
        let mut verdicts = Vec::new();
        let mut deferred = Vec::new();
        for (n, item) in self.items.iter().enumerate() {
            match item {
                TraceItem::Query(q) => {
                    experiment.dispatch(q.clone()).map_err(|e| TraceError::Syntax { item: n, message: e.to_string() })?;
                }
                TraceItem::Expect(x @ Expectation::Bottom(_)) => {
                    let actual = experiment.log().last().is_some_and(|e: &LogEntry| e.answer.is_bottom());
                    verdicts.push(Verdict { item: n, expectation: x.clone(), actual });
                }
                TraceItem::Expect(x) => deferred.push((n, x)),
            }
        }
        for (n, x) in deferred {
            let actual = x.evaluate(&experiment).expect("log-level expectation");
            verdicts.push(Verdict { item: n, expectation: x.clone(), actual });
        }
        verdicts.sort_by_key(|v| v.item);
        Ok(Replay { experiment, verdicts })
    }
}

/// Nine sends that carry one honest stage between `i` and `r`.
pub fn honest_stage(init: Pi, resp: Pi) -> Vec<AdversaryQuery> {
    let relay = |from, index| SendInput::Relay { from, index, stage: None };
    let mut qs = vec![AdversaryQuery::Send { to: init, input: SendInput::Start }];
    qs.push(AdversaryQuery::Send { to: resp, input: relay(init, 1) });
    for k in 2..=5 {
        qs.push(AdversaryQuery::Send { to: init, input: relay(resp, k) });
    }
    for k in 6..=8 {
        qs.push(AdversaryQuery::Send { to: resp, input: relay(init, k) });
    }
    qs
}

pub fn parse_trace(text: &str) -> Result<Trace, TraceError> {
    let mut parser = lexpr::Parser::from_str(text);
    let mut config = LabConfig::default();
    let mut items = Vec::new();
    let mut first = true;
    while let Some(value) = parser.next_value().map_err(|e| TraceError::Parse(e.to_string()))? {
        let n = items.len();
        let err = |message: String| TraceError::Syntax { item: n, message };
        let list = value.to_vec().ok_or_else(|| err(format!("expected a list, got {value}")))?;
        let (head, args) = list.split_first().ok_or_else(|| err("empty form".into()))?;
        let head = head.as_symbol().ok_or_else(|| err(format!("expected a symbol, got {head}")))?;
        if head == "config" {
            if !first {
                return Err(err("config must come first".into()));
            }
            config = parse_config(args).map_err(err)?;
        } else if head == "run" {
            let [i, s, j, r] = nums::<4>(args).map_err(err)?;
            items.extend(honest_stage(Pi::new(i, s), Pi::new(j, r)).into_iter().map(TraceItem::Query));
        } else {
            items.push(parse_item(head, args).map_err(err)?);
        }
        first = false;
    }
    Ok(Trace { config, items })
}

fn parse_config(args: &[Value]) -> Result<LabConfig, String> {
    let mut c = LabConfig::default();
    for arg in args {
        let pair = arg.to_vec().filter(|v| v.len() == 2).ok_or_else(|| format!("bad config entry {arg}"))?;
        let key = pair[0].as_symbol().ok_or_else(|| format!("bad config key {}", pair[0]))?;
        let v = &pair[1];
        match key {
            "parties" => c.parties = num(v)?,
            "sessions" => c.sessions = num(v)?,
            "stages" => c.stages = num(v)?,
            "seed" => c.seed = v.as_u64().ok_or_else(|| format!("bad seed {v}"))?,
            "bit" => c.test_bit = Some(num::<u8>(v)? == 1),
            "mode" => {
                c.mode = match v.as_symbol() {
                    Some("psk") => AuthMode::PskOnly,
                    Some("dss") | Some("cert") => AuthMode::DssOnly,
                    Some("both") => AuthMode::Both,
                    _ => return Err(format!("unknown mode {v}")),
                }
            }
            other => return Err(format!("unknown config key {other}")),
        }
    }
    Ok(c)
}

fn parse_item(head: &str, args: &[Value]) -> Result<TraceItem, String> {
    let q = match head {
        "create" => {
            if args.len() != 3 && args.len() != 4 {
                return Err("create takes i j role [s]".into());
            }
            let role = match args[2].as_symbol() {
                Some("init") => Role::Initiator,
                Some("resp") => Role::Responder,
                _ => return Err(format!("unknown role {}", args[2])),
            };
            let session = args.get(3).map(num).transpose()?;
            AdversaryQuery::Create { party: num(&args[0])?, partner: num(&args[1])?, role, session }
        }
        "send" => {
            if args.len() != 3 {
                return Err("send takes i s input".into());
            }
            AdversaryQuery::Send { to: Pi::new(num(&args[0])?, num(&args[1])?), input: parse_input(&args[2])? }
        }
        "reveal" | "test" => {
            let [i, s, t] = nums::<3>(args)?;
            let (pi, stage) = (Pi::new(i, s), t as u32);
            if head == "reveal" {
                AdversaryQuery::Reveal { pi, stage }
            } else {
                AdversaryQuery::Test { pi, stage }
            }
        }
        "expect" => return parse_expect(args).map(TraceItem::Expect),
        _ => {
            if let Some(key) = head.strip_prefix("corrupt-").and_then(long_term) {
                let [party] = nums::<1>(args)?;
                AdversaryQuery::Corrupt { key, party }
            } else if let Some(key) = head.strip_prefix("compromise-").and_then(ephemeral) {
                let [i, s, t] = nums::<3>(args)?;
                AdversaryQuery::Compromise { key, pi: Pi::new(i, s), stage: t as u32 }
            } else {
                return Err(format!("unknown query {head}"));
            }
        }
    };
    Ok(TraceItem::Query(q))
}

fn parse_input(v: &Value) -> Result<SendInput, String> {
    if v.as_symbol() == Some("start") {
        return Ok(SendInput::Start);
    }
    let list = v.to_vec().ok_or_else(|| format!("bad send input {v}"))?;
    let (head, args) = list.split_first().ok_or("empty send input")?;
    match head.as_symbol() {
        Some("relay") if args.len() == 3 || args.len() == 4 => Ok(SendInput::Relay {
            from: Pi::new(num(&args[0])?, num(&args[1])?),
            index: num(&args[2])?,
            stage: args.get(3).map(num).transpose()?,
        }),
        Some("tamper") if args.len() == 2 || args.len() == 3 => Ok(SendInput::Tamper {
            inner: Box::new(parse_input(&args[0])?),
            pos: num(&args[1])?,
            mask: args.get(2).map(num).transpose()?.unwrap_or(1),
        }),
        Some("hex") if args.len() == 1 => {
            let s = args[0].as_str().ok_or("hex takes a string")?;
            hex::decode(s).map(SendInput::Bytes).map_err(|e| e.to_string())
        }
        _ => Err(format!("bad send input {v}")),
    }
}

fn parse_expect(args: &[Value]) -> Result<Expectation, String> {
    let (kind, rest) = args.split_first().ok_or("empty expect")?;
    let (value, idx) = rest.split_last().ok_or("expect needs a value")?;
    let value = boolean(value)?;
    match kind.as_symbol() {
        Some("bottom") if idx.is_empty() => Ok(Expectation::Bottom(value)),
        Some(k @ ("clean-vm" | "clean-cvm")) => {
            let [i, s, t] = nums::<3>(idx)?;
            let (pi, stage) = (Pi::new(i, s), t as u32);
            Ok(if k == "clean-vm" {
                Expectation::CleanVm { pi, stage, value }
            } else {
                Expectation::CleanCvm { pi, stage, value }
            })
        }
        Some(k @ ("matching" | "origin" | "prefix")) => {
            let [i, s, j, r, t] = nums::<5>(idx)?;
            let relation = match k {
                "matching" => Relation::Matching,
                "origin" => Relation::Origin,
                _ => Relation::Prefix,
            };
            Ok(Expectation::Relation { relation, a: Pi::new(i, s), b: Pi::new(j, r), stage: t as u32, value })
        }
        _ => Err(format!("bad expectation {kind}")),
    }
}

fn long_term(name: &str) -> Option<LongTermKey> {
    Some(match name {
        "sk" => LongTermKey::Sk,
        "qk" => LongTermKey::Qk,
        "ck" => LongTermKey::Ck,
        _ => return None,
    })
}

fn ephemeral(name: &str) -> Option<EphemeralKey> {
    Some(match name {
        "qk" => EphemeralKey::Qk,
        "ck" => EphemeralKey::Ck,
        "sk" => EphemeralKey::Sk,
        "ss" => EphemeralKey::Ss,
        _ => return None,
    })
}

fn boolean(v: &Value) -> Result<bool, String> {
    v.as_bool()
        .or_else(|| match v.as_symbol() {
            Some("true") => Some(true),
            Some("false") => Some(false),
            _ => None,
        })
        .ok_or_else(|| format!("expected #t or #f, got {v}"))
}

fn num<T: TryFrom<u64>>(v: &Value) -> Result<T, String> {
    v.as_u64().and_then(|n| T::try_from(n).ok()).ok_or_else(|| format!("expected a number, got {v}"))
}

fn nums<const N: usize>(args: &[Value]) -> Result<[usize; N], String> {
    if args.len() != N {
        return Err(format!("expected {N} numbers, got {} arguments", args.len()));
    }
    let mut out = [0; N];
    for (o, a) in out.iter_mut().zip(args) {
        *o = num(a)?;
    }
    Ok(out)
}

fn flag(v: bool) -> &'static str {
    if v {
        "#t"
    } else {
        "#f"
    }
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::Bottom(v) => write!(f, "(expect bottom {})", flag(*v)),
            Expectation::CleanVm { pi, stage, value } => write!(f, "(expect clean-vm {pi} {stage} {})", flag(*value)),
            Expectation::CleanCvm { pi, stage, value } => {
                write!(f, "(expect clean-cvm {pi} {stage} {})", flag(*value))
            }
            Expectation::Relation { relation, a, b, stage, value } => {
                write!(f, "(expect {} {a} {b} {stage} {})", relation.name(), flag(*value))
            }
        }
    }
}

impl fmt::Display for LabConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mode = match self.mode {
            AuthMode::PskOnly => "psk",
            AuthMode::DssOnly => "dss",
            AuthMode::Both => "both",
        };
        write!(
            f,
            "(config (parties {}) (sessions {}) (stages {}) (mode {mode}) (seed {})",
            self.parties, self.sessions, self.stages, self.seed
        )?;
        if let Some(b) = self.test_bit {
            write!(f, " (bit {})", u8::from(b))?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.config)?;
        for item in &self.items {
            match item {
                TraceItem::Query(q) => writeln!(f, "{q}")?,
                TraceItem::Expect(x) => writeln!(f, "{x}")?,
            }
        }
        Ok(())
    }
}
