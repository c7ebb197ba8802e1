//! Primitive interfaces (KEM, DSS, MAC, PRF, AEAD, hash) and the algorithm
//! registry that binds names to implementations.
//!
//! Names follow the usual parameter-set spelling, e.g. `"ML-KEM-1024"`,
//! `"Falcon-512"`, `"SLH-DSA-SHAKE-256f"`, `"ECDH-P521"`. The classical KEM and
//! the signature scheme may be `"none"`.

mod dss;
mod kem;
mod symmetric;

use std::fmt;

use rand_core::CryptoRngCore;
use thiserror::Error;

pub use dss::SignatureScheme;
pub use kem::Kem;
pub use symmetric::{
    aead_open, aead_seal, hash, mac_auth, mac_verify, prf, AEAD_KEY_LEN, AEAD_NONCE_LEN, HASH_LEN,
};

use crate::Secret;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SuiteError {
    #[error("unknown {kind} algorithm {name:?}")]
    UnknownAlgorithm { kind: AlgorithmKind, name: String },
    #[error("\"none\" is not allowed for a {0} algorithm")]
    NoneNotAllowed(AlgorithmKind),
    #[error("malformed public key for {0}")]
    MalformedPublicKey(&'static str),
    #[error("malformed secret key for {0}")]
    MalformedSecretKey(&'static str),
    #[error("decapsulation failed for {0}")]
    DecapsFailure(&'static str),
    #[error("AEAD authentication failed")]
    AeadAuthFailure,
    #[error("invalid cipher suite: {0}")]
    InvalidSuite(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlgorithmKind {
    KemClassical,
    KemPostQuantum,
    Signature,
    Mac,
    Prf,
    Aead,
    Hash,
}

impl AlgorithmKind {
    fn allows_none(self) -> bool {
        matches!(self, AlgorithmKind::KemClassical | AlgorithmKind::Signature)
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AlgorithmKind::KemClassical => "classical KEM",
            AlgorithmKind::KemPostQuantum => "post-quantum KEM",
            AlgorithmKind::Signature => "signature",
            AlgorithmKind::Mac => "MAC",
            AlgorithmKind::Prf => "PRF",
            AlgorithmKind::Aead => "AEAD",
            AlgorithmKind::Hash => "hash",
        };
        f.write_str(s)
    }
}

/// A registered algorithm. Only obtainable through the registry, so every
/// value names an implementation that exists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AlgorithmId {
    kind: AlgorithmKind,
    name: &'static str,
}

pub const NONE: &str = "none";

impl AlgorithmId {
    pub fn new(kind: AlgorithmKind, name: &str) -> Result<Self, SuiteError> {
        if name == NONE && !kind.allows_none() {
            return Err(SuiteError::NoneNotAllowed(kind));
        }
        registry::names(kind)
            .iter()
            .find(|n| **n == name)
            .map(|n| AlgorithmId { kind, name: n })
            .ok_or_else(|| SuiteError::UnknownAlgorithm { kind, name: name.to_owned() })
    }

    pub fn kem_classical(name: &str) -> Result<Self, SuiteError> {
        Self::new(AlgorithmKind::KemClassical, name)
    }

    pub fn kem_pq(name: &str) -> Result<Self, SuiteError> {
        Self::new(AlgorithmKind::KemPostQuantum, name)
    }

    pub fn signature(name: &str) -> Result<Self, SuiteError> {
        Self::new(AlgorithmKind::Signature, name)
    }

    pub fn kind(&self) -> AlgorithmKind {
        self.kind
    }

    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn is_none(&self) -> bool {
        self.name == NONE
    }

    /// True for the deterministic test primitives, which offer no security.
    pub fn is_test_only(&self) -> bool {
        self.name.starts_with("Test")
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

pub mod registry {
    //! Name tables for every algorithm kind.

    use super::{dss, kem, AlgorithmId, AlgorithmKind, Kem, SignatureScheme, SuiteError};

    pub(super) static KEMS: &[&dyn Kem] = &[
        &kem::NoKem,
        &kem::TestKem32,
        &kem::EcdhP521,
        &kem::MlKem512,
        &kem::MlKem768,
        &kem::MlKem1024,
    ];

    pub(super) static SIGNATURES: &[&dyn SignatureScheme] = &[
        &dss::NoSignature,
        &dss::TestDss,
        &dss::Ed25519,
        &dss::MlDsa44,
        &dss::MlDsa65,
        &dss::MlDsa87,
        &dss::Falcon512,
        &dss::Falcon1024,
        &dss::SlhDsaShake128f,
        &dss::SlhDsaShake192f,
        &dss::SlhDsaShake256f,
    ];

    const CLASSICAL_KEMS: &[&str] = &["none", "ECDH-P521", "TestKEM-32"];
    const PQ_KEMS: &[&str] = &["ML-KEM-512", "ML-KEM-768", "ML-KEM-1024", "TestKEM-32"];
    const SIGNATURE_NAMES: &[&str] = &[
        "none",
        "ML-DSA-44",
        "ML-DSA-65",
        "ML-DSA-87",
        "Falcon-512",
        "Falcon-1024",
        "SLH-DSA-SHAKE-128f",
        "SLH-DSA-SHAKE-192f",
        "SLH-DSA-SHAKE-256f",
        "Ed25519",
        "TestDSS",
    ];

    /// Registered names for `kind`, in display order.
    pub fn names(kind: AlgorithmKind) -> &'static [&'static str] {
        match kind {
            AlgorithmKind::KemClassical => CLASSICAL_KEMS,
            AlgorithmKind::KemPostQuantum => PQ_KEMS,
            AlgorithmKind::Signature => SIGNATURE_NAMES,
            AlgorithmKind::Mac | AlgorithmKind::Prf => &["HMAC-SHA-384"],
            AlgorithmKind::Aead => &["AES-256-GCM"],
            AlgorithmKind::Hash => &["SHA-384"],
        }
    }

    pub fn kem(id: AlgorithmId) -> Result<&'static dyn Kem, SuiteError> {
        if !matches!(id.kind(), AlgorithmKind::KemClassical | AlgorithmKind::KemPostQuantum) {
            return Err(unknown(id));
        }
        KEMS.iter().copied().find(|k| k.name() == id.name()).ok_or_else(|| unknown(id))
    }

    pub fn signature(id: AlgorithmId) -> Result<&'static dyn SignatureScheme, SuiteError> {
        if id.kind() != AlgorithmKind::Signature {
            return Err(unknown(id));
        }
        SIGNATURES.iter().copied().find(|s| s.name() == id.name()).ok_or_else(|| unknown(id))
    }

    fn unknown(id: AlgorithmId) -> SuiteError {
        SuiteError::UnknownAlgorithm { kind: id.kind(), name: id.name().to_owned() }
    }
}

/// The algorithms both peers run in a stage, agreed out of band.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CipherSuite {
    pub kem_c: AlgorithmId,
    pub kem_pq: AlgorithmId,
    pub dss: AlgorithmId,
    pub mac: AlgorithmId,
    pub prf: AlgorithmId,
    pub aead: AlgorithmId,
    pub hash: AlgorithmId,
    /// Security parameter λ in bits; sizes the nonces and the QKD key.
    pub security_param: u32,
}

impl CipherSuite {
    /// Suite with the fixed symmetric algorithms and λ = 256.
    pub fn new(kem_c: &str, kem_pq: &str, dss: &str) -> Result<Self, SuiteError> {
        let suite = CipherSuite {
            kem_c: AlgorithmId::kem_classical(kem_c)?,
            kem_pq: AlgorithmId::kem_pq(kem_pq)?,
            dss: AlgorithmId::signature(dss)?,
            mac: AlgorithmId::new(AlgorithmKind::Mac, "HMAC-SHA-384")?,
            prf: AlgorithmId::new(AlgorithmKind::Prf, "HMAC-SHA-384")?,
            aead: AlgorithmId::new(AlgorithmKind::Aead, "AES-256-GCM")?,
            hash: AlgorithmId::new(AlgorithmKind::Hash, "SHA-384")?,
            security_param: 256,
        };
        suite.validate()?;
        Ok(suite)
    }

    pub fn with_security_param(mut self, lambda: u32) -> Result<Self, SuiteError> {
        self.security_param = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), SuiteError> {
        let kinds = [
            (self.kem_c, AlgorithmKind::KemClassical),
            (self.kem_pq, AlgorithmKind::KemPostQuantum),
            (self.dss, AlgorithmKind::Signature),
            (self.mac, AlgorithmKind::Mac),
            (self.prf, AlgorithmKind::Prf),
            (self.aead, AlgorithmKind::Aead),
            (self.hash, AlgorithmKind::Hash),
        ];
        for (id, kind) in kinds {
            if id.kind() != kind {
                return Err(SuiteError::InvalidSuite(format!("{id} is not a {kind}")));
            }
        }
        if self.kem_pq.is_none() {
            return Err(SuiteError::NoneNotAllowed(AlgorithmKind::KemPostQuantum));
        }
        let lambda = self.security_param;
        if lambda < 128 || lambda % 8 != 0 || lambda as usize > 8 * HASH_LEN {
            return Err(SuiteError::InvalidSuite(format!(
                "security parameter {lambda} must be a multiple of 8 in 128..=384"
            )));
        }
        Ok(())
    }

    /// Byte length of nonces and of the QKD key.
    pub fn lambda_bytes(&self) -> usize {
        self.security_param as usize / 8
    }
}

impl fmt::Display for CipherSuite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} & QKD-{}", self.kem_pq, self.security_param)?;
        if !self.kem_c.is_none() {
            write!(f, " & {}", self.kem_c)?;
        }
        write!(f, " / {}", self.dss)
    }
}

/// Ephemeral KEM key pair. Both halves are empty for `"none"`.
#[derive(Debug, Clone)]
pub struct KemKeyPair {
    pub public_key: Vec<u8>,
    pub secret_key: Secret,
    pub algorithm: AlgorithmId,
}

pub fn kem_keygen(alg: AlgorithmId, rng: &mut dyn CryptoRngCore) -> Result<KemKeyPair, SuiteError> {
    let (public_key, secret_key) = registry::kem(alg)?.keygen(rng)?;
    Ok(KemKeyPair { public_key, secret_key, algorithm: alg })
}

/// Returns `(ciphertext, shared_secret)`.
pub fn kem_encaps(
    alg: AlgorithmId,
    pk: &[u8],
    rng: &mut dyn CryptoRngCore,
) -> Result<(Vec<u8>, Secret), SuiteError> {
    registry::kem(alg)?.encaps(pk, rng)
}

pub fn kem_decaps(alg: AlgorithmId, sk: &[u8], ct: &[u8]) -> Result<Secret, SuiteError> {
    registry::kem(alg)?.decaps(sk, ct)
}

/// Returns `(public_key, secret_key)`.
pub fn sig_keygen(alg: AlgorithmId, rng: &mut dyn CryptoRngCore) -> Result<(Vec<u8>, Secret), SuiteError> {
    let scheme = registry::signature(alg)?;
    if alg.is_none() {
        return Err(SuiteError::UnknownAlgorithm { kind: alg.kind(), name: NONE.into() });
    }
    scheme.keygen(rng)
}

pub fn sign(alg: AlgorithmId, sk: &[u8], message: &[u8]) -> Result<Vec<u8>, SuiteError> {
    registry::signature(alg)?.sign(sk, message)
}

pub fn verify(alg: AlgorithmId, pk: &[u8], message: &[u8], signature: &[u8]) -> bool {
    registry::signature(alg).is_ok_and(|s| s.verify(pk, message, signature))
}
