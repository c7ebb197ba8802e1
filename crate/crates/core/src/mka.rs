//! MACsec key hierarchy rooted in a handshake master secret, plus key-server
//! election and SAK distribution frames.
//!
//! ```text
//! CAK = HMAC-SHA-256(MSK, CKN)
//! KEK = HMAC-SHA-256(CAK, "IEEE8021 KEK" || CKN)
//! ICK = HMAC-SHA-256(CAK, "IEEE8021 ICK" || CKN)
//! SAK = HMAC-SHA-256(CAK, SCI || key_number (u32 BE) || nonce)
//! ```
//!
//! IEEE 802.1X derives these with an AES-CMAC KDF; here every step is
//! HMAC-SHA-256.
//!
//! Frame layout (all integers big-endian), 144 bytes:
//!
//! | offset | len | field |
//! |-------:|----:|-------|
//! | 0   | 1  | version (1) |
//! | 1   | 12 | member id |
//! | 13  | 1  | key server priority |
//! | 14  | 4  | key number |
//! | 18  | 8  | SCI |
//! | 26  | 8  | cipher suite (`0x0080C20001000002`, GCM-AES-256) |
//! | 34  | 32 | key server nonce |
//! | 66  | 12 | wrap nonce |
//! | 78  | 2  | wrapped length (48) |
//! | 80  | 48 | AES-256-GCM(KEK, wrap nonce, aad = bytes 0..80, SAK) |
//! | 128 | 16 | ICV = HMAC-SHA-256(ICK, bytes 0..128) truncated |

use hmac::{Hmac, KeyInit, Mac};
use rand_core::CryptoRngCore;
use sha2::Sha256;
use subtle::ConstantTimeEq;
use thiserror::Error;

use crate::suite::{aead_open, aead_seal, AEAD_NONCE_LEN};
use crate::Secret;

pub const DEFAULT_CKN: &str = "VMUCKLE-CA-01";
pub const GCM_AES_256: u64 = 0x0080_C200_0100_0002;
pub const FRAME_VERSION: u8 = 1;
pub const MSK_LEN: usize = 48;
pub const KEY_LEN: usize = 32;
pub const ICV_LEN: usize = 16;
pub const HEADER_LEN: usize = 80;
pub const WRAPPED_LEN: usize = KEY_LEN + 16;
pub const FRAME_LEN: usize = HEADER_LEN + WRAPPED_LEN + ICV_LEN;

const KEK_LABEL: &[u8] = b"IEEE8021 KEK";
const ICK_LABEL: &[u8] = b"IEEE8021 ICK";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MkaError {
    #[error("{what} has {got} bytes, expected {expected}")]
    BadLength { what: &'static str, got: usize, expected: &'static str },
    #[error("no members to elect a key server from")]
    EmptyMembership,
    #[error("ICV mismatch")]
    IcvMismatch,
    #[error("SAK unwrap failed")]
    AeadAuthFailure,
    #[error("malformed frame: {0}")]
    MalformedFrame(&'static str),
}

fn hmac_sha256(key: &[u8], parts: &[&[u8]]) -> [u8; 32] {
    let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(key).expect("HMAC accepts any key length");
    for p in parts {
        mac.update(p);
    }
    mac.finalize().into_bytes().into()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MkaHierarchy {
    pub msk: Secret,
    pub ckn: Vec<u8>,
    pub cak: Secret,
    pub kek: Secret,
    pub ick: Secret,
}

/// Derives CAK, KEK and ICK from a 48-byte MSK and a 1 to 32 byte CKN.
pub fn derive_hierarchy(msk: &[u8], ckn: &[u8]) -> Result<MkaHierarchy, MkaError> {
    if msk.len() != MSK_LEN {
        return Err(MkaError::BadLength { what: "MSK", got: msk.len(), expected: "48" });
    }
    if ckn.is_empty() || ckn.len() > 32 {
        return Err(MkaError::BadLength { what: "CKN", got: ckn.len(), expected: "1 to 32" });
    }
    let cak = hmac_sha256(msk, &[ckn]);
    let kek = hmac_sha256(&cak, &[KEK_LABEL, ckn]);
    let ick = hmac_sha256(&cak, &[ICK_LABEL, ckn]);
    Ok(MkaHierarchy {
        msk: Secret::from_slice(msk),
        ckn: ckn.to_vec(),
        cak: Secret::from(cak),
        kek: Secret::from(kek),
        ick: Secret::from(ick),
    })
}

/// Picks the member with the highest priority; ties go to the lowest id.
pub fn elect_key_server<I: Ord + Clone>(members: &[(I, u8)]) -> Result<I, MkaError> {
    members
        .iter()
        .max_by(|(ia, pa), (ib, pb)| pa.cmp(pb).then_with(|| ib.cmp(ia)))
        .map(|(id, _)| id.clone())
        .ok_or(MkaError::EmptyMembership)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SakRecord {
    pub sak: Secret,
    pub sci: [u8; 8],
    pub key_number: u32,
    pub nonce: [u8; 32],
}

/// SAK for a given key-server nonce.
pub fn derive_sak(h: &MkaHierarchy, sci: [u8; 8], key_number: u32, nonce: [u8; 32]) -> SakRecord {
    let sak = hmac_sha256(h.cak.as_bytes(), &[&sci, &key_number.to_be_bytes(), &nonce]);
    SakRecord { sak: Secret::from(sak), sci, key_number, nonce }
}

pub fn generate_sak(h: &MkaHierarchy, sci: [u8; 8], key_number: u32, rng: &mut dyn CryptoRngCore) -> SakRecord {
    let mut nonce = [0u8; 32];
    rng.fill_bytes(&mut nonce);
    derive_sak(h, sci, key_number, nonce)
}

/// Identity of the sending member as carried in a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Member {
    pub member_id: [u8; 12],
    pub priority: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MkpduFrame {
    pub member: Member,
    pub key_number: u32,
    pub sci: [u8; 8],
    pub ciphersuite: u64,
    pub nonce: [u8; 32],
    pub wrap_nonce: [u8; AEAD_NONCE_LEN],
    pub wrapped_sak: Vec<u8>,
    pub icv: [u8; ICV_LEN],
}

impl MkpduFrame {
    fn header(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN);
        out.push(FRAME_VERSION);
        out.extend_from_slice(&self.member.member_id);
        out.push(self.member.priority);
        out.extend_from_slice(&self.key_number.to_be_bytes());
        out.extend_from_slice(&self.sci);
        out.extend_from_slice(&self.ciphersuite.to_be_bytes());
        out.extend_from_slice(&self.nonce);
        out.extend_from_slice(&self.wrap_nonce);
        out.extend_from_slice(&(self.wrapped_sak.len() as u16).to_be_bytes());
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = self.header();
        out.extend_from_slice(&self.wrapped_sak);
        out.extend_from_slice(&self.icv);
        out
    }

    /// Parses the layout without checking the ICV.
    pub fn decode(bytes: &[u8]) -> Result<Self, MkaError> {
        if bytes.len() != FRAME_LEN {
            return Err(MkaError::BadLength { what: "frame", got: bytes.len(), expected: "144" });
        }
        if bytes[0] != FRAME_VERSION {
            return Err(MkaError::MalformedFrame("unknown version"));
        }
        let arr = |r: std::ops::Range<usize>| &bytes[r];
        if u16::from_be_bytes([bytes[78], bytes[79]]) as usize != WRAPPED_LEN {
            return Err(MkaError::MalformedFrame("wrapped length is not 48"));
        }
        let frame = MkpduFrame {
            member: Member { member_id: arr(1..13).try_into().expect("12 bytes"), priority: bytes[13] },
            key_number: u32::from_be_bytes(arr(14..18).try_into().expect("4 bytes")),
            sci: arr(18..26).try_into().expect("8 bytes"),
            ciphersuite: u64::from_be_bytes(arr(26..34).try_into().expect("8 bytes")),
            nonce: arr(34..66).try_into().expect("32 bytes"),
            wrap_nonce: arr(66..78).try_into().expect("12 bytes"),
            wrapped_sak: arr(80..128).to_vec(),
            icv: arr(128..144).try_into().expect("16 bytes"),
        };
        if frame.ciphersuite != GCM_AES_256 {
            return Err(MkaError::MalformedFrame("unsupported cipher suite"));
        }
        Ok(frame)
    }
}

fn icv(h: &MkaHierarchy, body: &[u8]) -> [u8; ICV_LEN] {
    hmac_sha256(h.ick.as_bytes(), &[body])[..ICV_LEN].try_into().expect("16 bytes")
}

/// Wraps `rec.sak` under the KEK with the given AEAD nonce.
pub fn wrap_sak_with_nonce(h: &MkaHierarchy, rec: &SakRecord, member: Member, wrap_nonce: [u8; 12]) -> MkpduFrame {
    let mut frame = MkpduFrame {
        member,
        key_number: rec.key_number,
        sci: rec.sci,
        ciphersuite: GCM_AES_256,
        nonce: rec.nonce,
        wrap_nonce,
        wrapped_sak: vec![0; WRAPPED_LEN],
        icv: [0; ICV_LEN],
    };
    let header = frame.header();
    frame.wrapped_sak =
        aead_seal(h.kek.as_bytes(), &wrap_nonce, &header, rec.sak.as_bytes()).expect("32-byte KEK and 12-byte nonce");
    let body = frame.encode();
    frame.icv = icv(h, &body[..HEADER_LEN + WRAPPED_LEN]);
    frame
}

/// Wraps with a fresh random 96-bit AEAD nonce.
pub fn wrap_sak(h: &MkaHierarchy, rec: &SakRecord, member: Member, rng: &mut dyn CryptoRngCore) -> MkpduFrame {
    let mut wrap_nonce = [0u8; 12];
    rng.fill_bytes(&mut wrap_nonce);
    wrap_sak_with_nonce(h, rec, member, wrap_nonce)
}

/// Checks the ICV, then decrypts. Returns the sender and the SAK record.
pub fn unwrap_frame(h: &MkaHierarchy, bytes: &[u8]) -> Result<(Member, SakRecord), MkaError> {
    if bytes.len() != FRAME_LEN {
        return Err(MkaError::BadLength { what: "frame", got: bytes.len(), expected: "144" });
    }
    let (body, tag) = bytes.split_at(HEADER_LEN + WRAPPED_LEN);
    if !bool::from(icv(h, body).ct_eq(tag)) {
        return Err(MkaError::IcvMismatch);
    }
    let frame = MkpduFrame::decode(bytes)?;
    let sak = aead_open(h.kek.as_bytes(), &frame.wrap_nonce, &bytes[..HEADER_LEN], &frame.wrapped_sak)
        .map_err(|_| MkaError::AeadAuthFailure)?;
    let rec = SakRecord { sak: Secret::new(sak), sci: frame.sci, key_number: frame.key_number, nonce: frame.nonce };
    Ok((frame.member, rec))
}

pub fn unwrap_sak(h: &MkaHierarchy, frame: &MkpduFrame) -> Result<SakRecord, MkaError> {
    unwrap_frame(h, &frame.encode()).map(|(_, rec)| rec)
}
