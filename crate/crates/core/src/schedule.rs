//! Key schedule of one stage.
//!
//! ```text
//!   ss_pq ─► k_pq ─► k0 ─┐
//!   ss_c  ─► k_c  ───────┴► k1 ─┐
//!   k_q  ───────────────────────┴► k2 ─┐
//!   SecState ──────────────────────────┴► k3 ─┬► CHTS ─► tk_chs, fk_C
//!                                             ├► SHTS ─► tk_shs, fk_S
//!                                             └► dHS ─► MS ─► CATS, SATS, SecState'
//! ```
//!
//! Every arrow is one `F(key, label || context)` call with HMAC-SHA-384.
//! Labels are written directly in front of their context with no separator.

use thiserror::Error;

use crate::suite::{prf, AEAD_KEY_LEN, HASH_LEN};
use crate::wire::{Context, Transcript, WireError};
use crate::Secret;

pub mod labels {
    pub const L0: &[u8] = b"derive k c";
    pub const L1: &[u8] = b"derive k pq";
    pub const L2: &[u8] = b"first ck";
    pub const L3: &[u8] = b"second ck";
    pub const L4: &[u8] = b"third ck";
    pub const L5: &[u8] = b"fourth ck";
    pub const L6: &[u8] = b"derived";
    pub const L7: &[u8] = b"c hs traffic";
    pub const L8: &[u8] = b"s hs traffic";
    pub const L9: &[u8] = b"finished";
    pub const L10: &[u8] = b"c ap traffic";
    pub const L11: &[u8] = b"s ap traffic";
    pub const L12: &[u8] = b"secstate";
    pub const L13: &[u8] = b"TLS 1.3, server CertificateVerify";
    pub const L14: &[u8] = b"TLS 1.3, client CertificateVerify";
    /// Expansion label for the handshake traffic keys.
    pub const TK: &[u8] = b"tk";

    pub const ALL: [&[u8]; 15] = [L0, L1, L2, L3, L4, L5, L6, L7, L8, L9, L10, L11, L12, L13, L14];
}

use labels::*;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScheduleError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("the post-quantum shared secret must not be empty")]
    EmptyPqSecret,
}

/// Secret inputs of one stage. Empty slices stand for absent values.
#[derive(Debug, Clone, Copy)]
pub struct StageInputs<'a> {
    pub ss_c: &'a [u8],
    pub ss_pq: &'a [u8],
    pub k_q: &'a [u8],
    pub sec_state: &'a [u8],
    pub transcript: &'a Transcript,
}

/// Everything derived before the authentication messages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandshakeSecrets {
    pub k_c: Secret,
    pub k_pq: Secret,
    pub k0: Secret,
    pub k1: Secret,
    pub k2: Secret,
    pub k3: Secret,
    pub chts: Secret,
    pub shts: Secret,
    pub dhs: Secret,
    pub tk_chs: Secret,
    pub tk_shs: Secret,
    pub fk_c: Secret,
    pub fk_s: Secret,
}

/// All secrets of a completed stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageKeys {
    pub handshake: HandshakeSecrets,
    pub ms: Secret,
    pub cats: Secret,
    pub sats: Secret,
    pub sec_state_next: Secret,
}

/// One `F` evaluation, as written to known-answer files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivationStep {
    pub name: &'static str,
    /// The key actually fed to HMAC (absent keys shown as 48 zero bytes).
    pub key: Vec<u8>,
    pub input: Vec<u8>,
    pub output: Vec<u8>,
}

impl DerivationStep {
    /// `name key-hex input-hex output-hex`
    pub fn to_kat_line(&self) -> String {
        format!("{} {} {} {}", self.name, hex::encode(&self.key), hex::encode(&self.input), hex::encode(&self.output))
    }
}

struct Deriver<'t> {
    trace: Option<&'t mut Vec<DerivationStep>>,
}

impl Deriver<'_> {
    fn f(&mut self, name: &'static str, key: &[u8], parts: &[&[u8]]) -> Secret {
        self.f_truncated(name, key, parts, HASH_LEN)
    }

    fn f_truncated(&mut self, name: &'static str, key: &[u8], parts: &[&[u8]], len: usize) -> Secret {
        let input = parts.concat();
        let out = prf(key, &input)[..len].to_vec();
        if let Some(trace) = self.trace.as_deref_mut() {
            let key = if key.is_empty() { vec![0; HASH_LEN] } else { key.to_vec() };
            trace.push(DerivationStep { name, key, input, output: out.clone() });
        }
        Secret::new(out)
    }

    fn handshake(&mut self, inp: &StageInputs<'_>) -> Result<HandshakeSecrets, ScheduleError> {
        if inp.ss_pq.is_empty() {
            return Err(ScheduleError::EmptyPqSecret);
        }
        let h_eps = inp.transcript.context(Context::Eps)?;
        let h0 = inp.transcript.context(Context::H0)?;
        let h1 = inp.transcript.context(Context::H1)?;

        let k_c = self.f("k_c", inp.ss_c, &[L0, &h1]);
        let k_pq = self.f("k_pq", inp.ss_pq, &[L1, &h1]);
        let k0 = self.f("k0", k_pq.as_bytes(), &[L2, &h1]);
        let k1 = self.f("k1", k_c.as_bytes(), &[L3, k0.as_bytes()]);
        let k2 = self.f("k2", inp.k_q, &[L4, k1.as_bytes()]);
        let k3 = self.f("k3", inp.sec_state, &[L5, k2.as_bytes()]);
        let chts = self.f("chts", k3.as_bytes(), &[L7, &h1]);
        let shts = self.f("shts", k3.as_bytes(), &[L8, &h1]);
        let dhs = self.f("dhs", k3.as_bytes(), &[L6, &h0]);
        let tk_chs = self.f_truncated("tk_chs", chts.as_bytes(), &[TK, &h_eps], AEAD_KEY_LEN);
        let tk_shs = self.f_truncated("tk_shs", shts.as_bytes(), &[TK, &h_eps], AEAD_KEY_LEN);
        let fk_c = self.f("fk_c", chts.as_bytes(), &[L9, &h_eps]);
        let fk_s = self.f("fk_s", shts.as_bytes(), &[L9, &h_eps]);
        Ok(HandshakeSecrets { k_c, k_pq, k0, k1, k2, k3, chts, shts, dhs, tk_chs, tk_shs, fk_c, fk_s })
    }

    fn application(&mut self, hs: HandshakeSecrets, tr: &Transcript) -> Result<StageKeys, ScheduleError> {
        let h4 = tr.context(Context::H4)?;
        let ms = self.f("ms", hs.dhs.as_bytes(), &[&[0u8]]);
        let cats = self.f("cats", ms.as_bytes(), &[L10, &h4]);
        let sats = self.f("sats", ms.as_bytes(), &[L11, &h4]);
        let sec_state_next = self.f("sec_state", ms.as_bytes(), &[L12, &h4]);
        Ok(StageKeys { handshake: hs, ms, cats, sats, sec_state_next })
    }
}

/// Derives k_c through fk_S. Needs messages 1 and 2 in the transcript.
pub fn derive_handshake_secrets(inputs: &StageInputs<'_>) -> Result<HandshakeSecrets, ScheduleError> {
    Deriver { trace: None }.handshake(inputs)
}

/// Derives MS, CATS, SATS and the next SecState. Needs messages 1 to 5.
pub fn derive_application_secrets(hs: HandshakeSecrets, transcript: &Transcript) -> Result<StageKeys, ScheduleError> {
    Deriver { trace: None }.application(hs, transcript)
}

/// Key for the Finished-style MAC: `F(psk, fk)`, with an empty PSK replaced
/// by 48 zero bytes.
pub fn mac_key(psk: &[u8], finished_key: &[u8]) -> Secret {
    Secret::from(prf(psk, finished_key))
}

/// Runs a whole stage schedule and returns its 17 derivation steps followed
/// by the two MAC-key derivations (`mac_key_s`, `mac_key_c`). The transcript
/// must hold messages 1 to 5.
pub fn known_answer_steps(inputs: &StageInputs<'_>, psk: &[u8]) -> Result<Vec<DerivationStep>, ScheduleError> {
    let mut steps = Vec::with_capacity(19);
    let mut d = Deriver { trace: Some(&mut steps) };
    let hs = d.handshake(inputs)?;
    let keys = d.application(hs, inputs.transcript)?;
    let fk_s = keys.handshake.fk_s.as_bytes().to_vec();
    let fk_c = keys.handshake.fk_c.as_bytes().to_vec();
    d.f("mac_key_s", psk, &[&fk_s]);
    d.f("mac_key_c", psk, &[&fk_c]);
    Ok(steps)
}
