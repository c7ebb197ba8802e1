//! `schedule-kat`: key-schedule known-answer vectors in the same text format
//! as the frozen fixtures.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use rand_core::RngCore;
use vmuckle::schedule::{known_answer_steps, StageInputs};
use vmuckle::wire::{HandshakeMessage, Transcript};

/// Input names in file order.
pub const INPUTS: [&str; 10] = ["ss_c", "ss_pq", "k_q", "sec_state", "psk", "m1", "m2", "m3", "m4", "m5"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KatVector {
    pub name: String,
    /// Values for [`INPUTS`], in that order.
    pub inputs: Vec<Vec<u8>>,
    /// Derivation lines; empty until computed or when read from inputs only.
    pub lines: Vec<String>,
}

impl KatVector {
    pub fn parse(text: &str) -> Result<Self> {
        let mut name = String::from("unnamed");
        let mut inputs = vec![None; INPUTS.len()];
        let mut lines = Vec::new();
        for line in text.lines() {
            if let Some(rest) = line.strip_prefix("# input ") {
                let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                let Some(i) = INPUTS.iter().position(|n| *n == k) else {
                    bail!("unknown input {k:?}");
                };
                inputs[i] = Some(hex::decode(v.trim()).with_context(|| format!("input {k} is not hex"))?);
            } else if let Some(rest) = line.strip_prefix("# vmuckle key schedule known-answer vector ") {
                name = rest.trim_matches('\'').to_owned();
            } else if !line.starts_with('#') && !line.trim().is_empty() {
                lines.push(line.trim_end().to_owned());
            }
        }
        let inputs = inputs
            .into_iter()
            .zip(INPUTS)
            .map(|(v, k)| v.with_context(|| format!("missing input {k}")))
            .collect::<Result<_>>()?;
        Ok(KatVector { name, inputs, lines })
    }

    /// Random inputs with realistic sizes: a P-521 secret (or none), ML-KEM
    /// and QKD keys of 32 bytes, a 48-byte SecState and a 32-byte PSK.
    pub fn random(name: &str, classical: bool, rng: &mut dyn RngCore) -> Self {
        let mut bytes = |n: usize| {
            let mut v = vec![0u8; n];
            rng.fill_bytes(&mut v);
            v
        };
        let ss_c = if classical { bytes(66) } else { Vec::new() };
        let (ss_pq, k_q, sec_state, psk) = (bytes(32), bytes(32), bytes(48), bytes(32));
        let m1 = HandshakeMessage::M1 { pk_c: if classical { bytes(133) } else { Vec::new() }, pk_pq: bytes(1184), n_i: bytes(32) };
        let m2 = HandshakeMessage::M2 { ct_c: if classical { bytes(133) } else { Vec::new() }, ct_pq: bytes(1088), n_r: bytes(32) };
        let m3 = HandshakeMessage::M3 { cert_r: bytes(64) };
        let m4 = HandshakeMessage::M4 { sig_r: bytes(64) };
        let m5 = HandshakeMessage::M5 { tau_r: bytes(48) };
        let msgs = [m1, m2, m3, m4, m5].map(|m| m.encode().expect("sizes fit the wire format"));
        let mut inputs = vec![ss_c, ss_pq, k_q, sec_state, psk];
        inputs.extend(msgs);
        KatVector { name: name.to_owned(), inputs, lines: Vec::new() }
    }

    fn input(&self, k: &str) -> &[u8] {
        &self.inputs[INPUTS.iter().position(|n| *n == k).expect("known input")]
    }

    /// The 19 derivation lines for these inputs.
    pub fn compute(&self) -> Result<Vec<String>> {
        let mut t = Transcript::new();
        for i in 1..=5 {
            let raw = self.input(&format!("m{i}")).to_vec();
            HandshakeMessage::decode(&raw).with_context(|| format!("m{i} does not decode"))?;
            t.push(raw)?;
        }
        let inputs = StageInputs {
            ss_c: self.input("ss_c"),
            ss_pq: self.input("ss_pq"),
            k_q: self.input("k_q"),
            sec_state: self.input("sec_state"),
            transcript: &t,
        };
        Ok(known_answer_steps(&inputs, self.input("psk"))?.iter().map(|s| s.to_kat_line()).collect())
    }

    /// Lines that differ from a fresh computation, as `(expected, computed)`.
    pub fn mismatches(&self) -> Result<Vec<(String, String)>> {
        let got = self.compute()?;
        if got.len() != self.lines.len() {
            bail!("file has {} derivation lines, expected {}", self.lines.len(), got.len());
        }
        Ok(self.lines.iter().zip(got).filter(|(w, g)| *w != g).map(|(w, g)| (w.clone(), g)).collect())
    }

    pub fn render(&self) -> String {
        let mut out = format!("# vmuckle key schedule known-answer vector '{}'\n", self.name);
        for (k, v) in INPUTS.iter().zip(&self.inputs) {
            let _ = writeln!(out, "# input {k} {}", hex::encode(v));
        }
        for l in &self.lines {
            out.push_str(l);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    #[test]
    fn render_parse_round_trip() {
        let mut v = KatVector::random("rt", true, &mut ChaCha20Rng::seed_from_u64(1));
        v.lines = v.compute().unwrap();
        assert_eq!(v.lines.len(), 19);
        let back = KatVector::parse(&v.render()).unwrap();
        assert_eq!(back, v);
        assert!(back.mismatches().unwrap().is_empty());
    }

    #[test]
    fn edited_line_is_reported() {
        let mut v = KatVector::random("x", false, &mut ChaCha20Rng::seed_from_u64(2));
        v.lines = v.compute().unwrap();
        v.lines[12].replace_range(0..2, "xx");
        assert_eq!(v.mismatches().unwrap().len(), 1);
    }
}
