//! Matching, origin and cleanness, evaluated over the finished query log.
//!
//! A query counts once it has been issued, whatever it was answered.

use super::{AdversaryQuery, EphemeralKey, Experiment, LongTermKey, Pi};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Flavor {
    Vm,
    Cvm,
}

/// Messages sent and received, in order.
type View<'a> = (Vec<&'a [u8]>, Vec<&'a [u8]>);

impl Experiment {
    /// `m_s[t]` and `m_r[t]`: everything sent and received through stage `t`.
    /// `None` if the session never reached stage `t`.
    fn view(&self, pi: Pi, t: u32) -> Option<View<'_>> {
        let session = self.session(pi)?;
        session.stage_record(t)?;
        let mut sent = Vec::new();
        let mut received = Vec::new();
        for rec in session.stages().iter().filter(|r| r.stage <= t) {
            sent.extend(rec.sent.iter().map(Vec::as_slice));
            received.extend(rec.received.iter().map(Vec::as_slice));
        }
        Some((sent, received))
    }

    pub fn matching(&self, a: Pi, b: Pi, t: u32) -> bool {
        if a == b {
            return false;
        }
        match (self.view(a, t), self.view(b, t)) {
            (Some((a_s, a_r)), Some((b_s, b_r))) => a_s == b_r && b_s == a_r,
            _ => false,
        }
    }

    /// `a` prefix-matches `b`: both logs truncated to the shorter one agree.
    pub fn prefix_matches(&self, a: Pi, b: Pi, t: u32) -> bool {
        if a == b {
            return false;
        }
        match (self.view(a, t), self.view(b, t)) {
            (Some((a_s, _)), Some((_, b_r))) => {
                let n = a_s.len().min(b_r.len());
                a_s[..n] == b_r[..n]
            }
            _ => false,
        }
    }

    /// `b` is an origin session of `a` in stage `t`.
    pub fn origin(&self, a: Pi, b: Pi, t: u32) -> bool {
        self.matching(a, b, t) || self.prefix_matches(a, b, t)
    }

    pub fn clean_vm(&self, pi: Pi, t: u32) -> bool {
        self.clean(pi, t, Flavor::Vm)
    }

    pub fn clean_cvm(&self, pi: Pi, t: u32) -> bool {
        self.clean(pi, t, Flavor::Cvm)
    }

    fn clean(&self, a: Pi, t: u32, flavor: Flavor) -> bool {
        if self.revealed(a, t) {
            return false;
        }
        let matches: Vec<Pi> = self.session_ids().filter(|b| self.matching(a, *b, t)).collect();
        if matches.iter().any(|b| self.revealed(*b, t)) {
            return false;
        }
        if !matches.iter().all(|b| self.ephemeral_ok(a, *b, t, flavor)) {
            return false;
        }
        let Some(partner) = self.partner(a) else {
            return true;
        };
        if !self.long_term_ok(a, t, a.party, partner) {
            return false;
        }
        self.session_ids()
            .filter(|b| self.origin(a, *b, t))
            .all(|b| self.long_term_ok(b, t, a.party, b.party))
    }

    /// Condition 3 for one matching session `b`.
    fn ephemeral_ok(&self, a: Pi, b: Pi, t: u32, flavor: Flavor) -> bool {
        let fresh = |key| !self.compromised(key, a, t) && !self.compromised(key, b, t);
        let mut keys = vec![EphemeralKey::Qk, EphemeralKey::Sk];
        if flavor == Flavor::Cvm {
            keys.push(EphemeralKey::Ck);
        }
        keys.iter().any(|&k| fresh(k)) || keys.iter().any(|&k| self.clean_chain(a, b, t, k))
    }

    /// Some stage `t' <= t` had `key` uncompromised on both sides, and the
    /// SecState chain from `t'` to `t` stayed matched, unrevealed and intact.
    fn clean_chain(&self, a: Pi, b: Pi, t: u32, key: EphemeralKey) -> bool {
        (1..=t).any(|t0| {
            !self.compromised(key, a, t0)
                && !self.compromised(key, b, t0)
                && (t0..=t).all(|u| self.matching(a, b, u) && !self.revealed(a, u) && !self.revealed(b, u))
                && (t0 + 1..=t).all(|u| {
                    !self.compromised(EphemeralKey::Ss, a, u) && !self.compromised(EphemeralKey::Ss, b, u)
                })
        })
    }

    /// Conditions 4 and 5: `CorruptQK(owner)` and a `CorruptSK` on the pair
    /// `{i, j}` must not both precede `owner`'s acceptance of stage `t`.
    fn long_term_ok(&self, owner: Pi, t: u32, i: usize, j: usize) -> bool {
        let before = self.accepted_at.get(&(owner, t)).copied().unwrap_or(self.log.len());
        let corrupted = |key: LongTermKey, party: usize| {
            self.log[..before]
                .iter()
                .any(|e| e.query == AdversaryQuery::Corrupt { key, party })
        };
        !(corrupted(LongTermKey::Qk, owner.party) && (corrupted(LongTermKey::Sk, i) || corrupted(LongTermKey::Sk, j)))
    }

    fn revealed(&self, pi: Pi, stage: u32) -> bool {
        self.issued(&AdversaryQuery::Reveal { pi, stage })
    }

    fn compromised(&self, key: EphemeralKey, pi: Pi, stage: u32) -> bool {
        self.issued(&AdversaryQuery::Compromise { key, pi, stage })
    }

    fn issued(&self, q: &AdversaryQuery) -> bool {
        self.log.iter().any(|e| &e.query == q)
    }
}
