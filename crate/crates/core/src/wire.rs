//! Handshake message encoding, the transcript, and its hash contexts.
//!
//! A message is one type byte (its index, 1..=8) followed by each field as a
//! 3-byte big-endian length and the field bytes, in protocol order. Messages
//! 3 to 8 travel sealed under AES-256-GCM; the transcript always records the
//! plaintext encoding.

use thiserror::Error;

use crate::codec::{self, CodecError, Reader};
use crate::suite::{self, AEAD_NONCE_LEN};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("field of {0} bytes exceeds the 3-byte length prefix")]
    FieldTooLong(usize),
    #[error("malformed message: {reason}")]
    MalformedMessage { reason: String },
    #[error("context {0:?} needs messages that are not in the transcript")]
    MissingPrefix(Context),
    #[error("expected message {expected}, got message {got}")]
    OutOfOrder { expected: u8, got: u8 },
    #[error("message {0} is not sealed")]
    NotSealed(u8),
    #[error("AEAD authentication failed on message {0}")]
    AeadAuthFailure(u8),
}

impl From<CodecError> for WireError {
    fn from(e: CodecError) -> Self {
        match e {
            CodecError::FieldTooLong(n) => WireError::FieldTooLong(n),
            CodecError::Malformed(reason) => WireError::MalformedMessage { reason: reason.into() },
        }
    }
}

fn malformed(reason: impl Into<String>) -> WireError {
    WireError::MalformedMessage { reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HandshakeMessage {
    M1 { pk_c: Vec<u8>, pk_pq: Vec<u8>, n_i: Vec<u8> },
    M2 { ct_c: Vec<u8>, ct_pq: Vec<u8>, n_r: Vec<u8> },
    M3 { cert_r: Vec<u8> },
    M4 { sig_r: Vec<u8> },
    M5 { tau_r: Vec<u8> },
    M6 { cert_i: Vec<u8> },
    M7 { sig_i: Vec<u8> },
    M8 { tau_i: Vec<u8> },
}

impl HandshakeMessage {
    pub fn index(&self) -> u8 {
        match self {
            HandshakeMessage::M1 { .. } => 1,
            HandshakeMessage::M2 { .. } => 2,
            HandshakeMessage::M3 { .. } => 3,
            HandshakeMessage::M4 { .. } => 4,
            HandshakeMessage::M5 { .. } => 5,
            HandshakeMessage::M6 { .. } => 6,
            HandshakeMessage::M7 { .. } => 7,
            HandshakeMessage::M8 { .. } => 8,
        }
    }

    fn fields(&self) -> Vec<&[u8]> {
        match self {
            HandshakeMessage::M1 { pk_c, pk_pq, n_i } => vec![pk_c, pk_pq, n_i],
            HandshakeMessage::M2 { ct_c, ct_pq, n_r } => vec![ct_c, ct_pq, n_r],
            HandshakeMessage::M3 { cert_r: f }
            | HandshakeMessage::M4 { sig_r: f }
            | HandshakeMessage::M5 { tau_r: f }
            | HandshakeMessage::M6 { cert_i: f }
            | HandshakeMessage::M7 { sig_i: f }
            | HandshakeMessage::M8 { tau_i: f } => vec![f],
        }
    }

    /// The single payload of messages 3 to 8.
    pub fn payload(&self) -> Option<&[u8]> {
        match self {
            HandshakeMessage::M1 { .. } | HandshakeMessage::M2 { .. } => None,
            _ => Some(self.fields()[0]),
        }
    }

    /// Builds message `index` (3..=8) around a single payload.
    pub fn with_payload(index: u8, payload: Vec<u8>) -> Result<Self, WireError> {
        Ok(match index {
            3 => HandshakeMessage::M3 { cert_r: payload },
            4 => HandshakeMessage::M4 { sig_r: payload },
            5 => HandshakeMessage::M5 { tau_r: payload },
            6 => HandshakeMessage::M6 { cert_i: payload },
            7 => HandshakeMessage::M7 { sig_i: payload },
            8 => HandshakeMessage::M8 { tau_i: payload },
            i => return Err(WireError::NotSealed(i)),
        })
    }

    pub fn encoded_len(&self) -> usize {
        1 + self.fields().iter().map(|f| codec::field_size(f.len())).sum::<usize>()
    }

    pub fn encode(&self) -> Result<Vec<u8>, WireError> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(self.index());
        for f in self.fields() {
            codec::put_field(&mut out, f)?;
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let mut r = Reader::new(bytes);
        let tag = r.u8().map_err(|_| malformed("empty message"))?;
        let mut next = || r.field().map(<[u8]>::to_vec);
        let msg = match tag {
            1 => HandshakeMessage::M1 { pk_c: next()?, pk_pq: next()?, n_i: next()? },
            2 => HandshakeMessage::M2 { ct_c: next()?, ct_pq: next()?, n_r: next()? },
            3..=8 => HandshakeMessage::with_payload(tag, next()?)?,
            t => return Err(malformed(format!("unknown message type {t}"))),
        };
        r.finish()?;
        Ok(msg)
    }
}

/// Transcript contexts. `Eps` is the empty string; `H0` is the hash of the
/// empty string; `H(k)` hashes messages 1 through k+1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Context {
    Eps,
    H0,
    H1,
    H2,
    H3,
    H4,
    H5,
    H6,
}

impl Context {
    /// Number of leading messages the context covers.
    fn prefix(self) -> usize {
        match self {
            Context::Eps | Context::H0 => 0,
            Context::H1 => 2,
            Context::H2 => 3,
            Context::H3 => 4,
            Context::H4 => 5,
            Context::H5 => 6,
            Context::H6 => 7,
        }
    }
}

/// Ordered plaintext encodings of the messages of one stage.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    messages: Vec<Vec<u8>>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends the encoding of the next message; its type byte must be the
    /// next index.
    pub fn push(&mut self, encoded: Vec<u8>) -> Result<(), WireError> {
        let expected = self.messages.len() as u8 + 1;
        let got = *encoded.first().ok_or_else(|| malformed("empty message"))?;
        if got != expected {
            return Err(WireError::OutOfOrder { expected, got });
        }
        self.messages.push(encoded);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn messages(&self) -> &[Vec<u8>] {
        &self.messages
    }

    pub fn context(&self, which: Context) -> Result<Vec<u8>, WireError> {
        match which {
            Context::Eps => Ok(Vec::new()),
            Context::H0 => Ok(suite::hash(b"").to_vec()),
            _ => {
                let n = which.prefix();
                if self.messages.len() < n {
                    return Err(WireError::MissingPrefix(which));
                }
                Ok(suite::hash(&self.messages[..n].concat()).to_vec())
            }
        }
    }
}

fn associated_data(index: u8) -> Vec<u8> {
    format!("Message {index}").into_bytes()
}

fn nonce(index: u8) -> [u8; AEAD_NONCE_LEN] {
    let mut n = [0u8; AEAD_NONCE_LEN];
    n[AEAD_NONCE_LEN - 1] = index;
    n
}

/// Seals the plaintext encoding of message `index` (3..=8). Associated data
/// is ASCII `"Message N"`; the nonce is N as a 96-bit big-endian counter.
pub fn seal_message(key: &[u8], index: u8, plaintext: &[u8]) -> Result<Vec<u8>, WireError> {
    if !(3..=8).contains(&index) {
        return Err(WireError::NotSealed(index));
    }
    suite::aead_seal(key, &nonce(index), &associated_data(index), plaintext)
        .map_err(|_| WireError::AeadAuthFailure(index))
}

pub fn open_message(key: &[u8], index: u8, sealed: &[u8]) -> Result<Vec<u8>, WireError> {
    if !(3..=8).contains(&index) {
        return Err(WireError::NotSealed(index));
    }
    suite::aead_open(key, &nonce(index), &associated_data(index), sealed).map_err(|_| WireError::AeadAuthFailure(index))
}
