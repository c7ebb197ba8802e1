//! Hybrid certificates for a root CA, one intermediate CA and end entities.
//!
//! Every certificate carries a post-quantum and a classical signature public
//! key and is signed by its issuer with both a post-quantum and a classical
//! signature. Verification demands both.
//!
//! Encoding (every field prefixed with a 3-byte big-endian length):
//!
//! ```text
//! cert = field(tbs) field(sig_pq) field(sig_classical)
//! tbs  = field(subject) field(issuer) field(not_before u64) field(not_after u64)
//!        field(pq alg) field(pq key) field(classical alg) field(classical key)
//!        field(issuer pq alg) field(issuer classical alg)
//! ```
//!
//! so `|cert| = 9 + |tbs| + |sig_pq| + |sig_classical|` and
//! `|tbs| = 46 + |subject| + |issuer| + |pq key| + |classical key| + (sum of the four algorithm names)`.

use std::fmt;

use rand_core::CryptoRngCore;
use thiserror::Error;

use crate::codec::{put_field, CodecError, Reader};
use crate::suite::{self, AlgorithmId, SuiteError};
use crate::Secret;

pub const CERT_MAGIC: [u8; 4] = *b"VMC1";
pub const CHAIN_MAGIC: [u8; 4] = *b"VMCH";
pub const KEY_MAGIC: [u8; 4] = *b"VMK1";

/// Default CA algorithms: ML-DSA-87 alongside Ed25519.
pub const CA_PQ_ALG: &str = "ML-DSA-87";
pub const CLASSICAL_ALG: &str = "Ed25519";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PkiError {
    #[error("issuer {0:?} lacks one of its two signing keys")]
    MissingKey(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error("expected file magic {expected:?}")]
    BadMagic { expected: String },
    #[error("a certificate's post-quantum and classical keys must use a post-quantum and a classical scheme")]
    AlgorithmMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignatureKind {
    PostQuantum,
    Classical,
}

impl fmt::Display for SignatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SignatureKind::PostQuantum => "post-quantum",
            SignatureKind::Classical => "classical",
        })
    }
}

/// Why a chain did not verify.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChainFailure {
    #[error("root does not match the trust anchor")]
    AnchorMismatch,
    #[error("{subject:?} names issuer {issuer:?}, expected {expected:?}")]
    IssuerMismatch { subject: String, issuer: String, expected: String },
    #[error("{subject:?} has no {kind} signature")]
    MissingSignature { subject: String, kind: SignatureKind },
    #[error("{subject:?} has an invalid {kind} signature")]
    BadSignature { subject: String, kind: SignatureKind },
    #[error("{subject:?} expired")]
    Expired { subject: String },
    #[error("{subject:?} is not yet valid")]
    NotYetValid { subject: String },
    #[error("leaf names {got:?}, expected {expected:?}")]
    SubjectMismatch { expected: String, got: String },
    #[error("presented chain is malformed: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKeyInfo {
    pub algorithm: AlgorithmId,
    pub key: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SigningKeyPair {
    pub algorithm: AlgorithmId,
    pub public: Vec<u8>,
    pub secret: Secret,
}

impl SigningKeyPair {
    pub fn generate(algorithm: AlgorithmId, rng: &mut dyn CryptoRngCore) -> Result<Self, PkiError> {
        let (public, secret) = suite::sig_keygen(algorithm, rng)?;
        Ok(SigningKeyPair { algorithm, public, secret })
    }

    pub fn public_info(&self) -> PublicKeyInfo {
        PublicKeyInfo { algorithm: self.algorithm, key: self.public.clone() }
    }

    pub fn sign(&self, message: &[u8]) -> Result<Vec<u8>, PkiError> {
        Ok(suite::sign(self.algorithm, self.secret.as_bytes(), message)?)
    }
}

/// A named holder of a post-quantum and a classical signing key.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Identity {
    pub name: String,
    pub pq: SigningKeyPair,
    pub classical: SigningKeyPair,
}

impl Identity {
    pub fn generate(
        name: impl Into<String>,
        pq_alg: AlgorithmId,
        classical_alg: AlgorithmId,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<Self, PkiError> {
        Ok(Identity {
            name: name.into(),
            pq: SigningKeyPair::generate(pq_alg, rng)?,
            classical: SigningKeyPair::generate(classical_alg, rng)?,
        })
    }

    pub fn issuer(&self) -> Issuer<'_> {
        Issuer { name: &self.name, pq: Some(&self.pq), classical: Some(&self.classical) }
    }

    pub fn subject(&self) -> Subject<'_> {
        Subject { name: &self.name, pq: self.pq.public_info(), classical: self.classical.public_info() }
    }

    pub fn to_file_bytes(&self) -> Vec<u8> {
        let mut out = KEY_MAGIC.to_vec();
        for f in [
            self.name.as_bytes(),
            self.pq.algorithm.name().as_bytes(),
            &self.pq.public,
            self.pq.secret.as_bytes(),
            self.classical.algorithm.name().as_bytes(),
            &self.classical.public,
            self.classical.secret.as_bytes(),
        ] {
            put_field(&mut out, f).expect("key material fits a field");
        }
        out
    }

    pub fn from_file_bytes(bytes: &[u8]) -> Result<Self, PkiError> {
        let mut r = Reader::new(strip_magic(bytes, KEY_MAGIC)?);
        let name = r.str_field()?.to_owned();
        let pq_alg = AlgorithmId::signature(r.str_field()?)?;
        let pq = SigningKeyPair { algorithm: pq_alg, public: r.field()?.to_vec(), secret: Secret::from_slice(r.field()?) };
        let cl_alg = AlgorithmId::signature(r.str_field()?)?;
        let classical =
            SigningKeyPair { algorithm: cl_alg, public: r.field()?.to_vec(), secret: Secret::from_slice(r.field()?) };
        r.finish()?;
        Ok(Identity { name, pq, classical })
    }
}

/// Signing side of certificate issuance. Both keys are required.
#[derive(Debug, Clone, Copy)]
pub struct Issuer<'a> {
    pub name: &'a str,
    pub pq: Option<&'a SigningKeyPair>,
    pub classical: Option<&'a SigningKeyPair>,
}

#[derive(Debug, Clone)]
pub struct Subject<'a> {
    pub name: &'a str,
    pub pq: PublicKeyInfo,
    pub classical: PublicKeyInfo,
}

/// Validity window in seconds since the Unix epoch, both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Validity {
    pub not_before: u64,
    pub not_after: u64,
}

impl Validity {
    pub fn days_from(now: u64, days: u64) -> Self {
        Validity { not_before: now.saturating_sub(60), not_after: now + days * 86_400 }
    }

    pub fn contains(&self, t: u64) -> bool {
        self.not_before <= t && t <= self.not_after
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HybridCertificate {
    pub subject: String,
    pub issuer: String,
    pub validity: Validity,
    pub pk_pq_sig: PublicKeyInfo,
    pub pk_classical_sig: PublicKeyInfo,
    pub issuer_pq_alg: AlgorithmId,
    pub issuer_classical_alg: AlgorithmId,
    pub sig_pq: Vec<u8>,
    pub sig_classical: Vec<u8>,
}

impl HybridCertificate {
    /// Canonical to-be-signed bytes.
    pub fn raw_tbs(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for f in [
            self.subject.as_bytes(),
            self.issuer.as_bytes(),
            &self.validity.not_before.to_be_bytes(),
            &self.validity.not_after.to_be_bytes(),
            self.pk_pq_sig.algorithm.name().as_bytes(),
            &self.pk_pq_sig.key,
            self.pk_classical_sig.algorithm.name().as_bytes(),
            &self.pk_classical_sig.key,
            self.issuer_pq_alg.name().as_bytes(),
            self.issuer_classical_alg.name().as_bytes(),
        ] {
            put_field(&mut out, f).expect("certificate fields fit a length prefix");
        }
        out
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for f in [&self.raw_tbs()[..], &self.sig_pq, &self.sig_classical] {
            put_field(&mut out, f).expect("certificate fits a length prefix");
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PkiError> {
        let mut outer = Reader::new(bytes);
        let tbs = outer.field()?;
        let sig_pq = outer.field()?.to_vec();
        let sig_classical = outer.field()?.to_vec();
        outer.finish()?;

        let mut r = Reader::new(tbs);
        let subject = r.str_field()?.to_owned();
        let issuer = r.str_field()?.to_owned();
        let validity = Validity { not_before: r.u64_field()?, not_after: r.u64_field()? };
        let pq_alg = AlgorithmId::signature(r.str_field()?)?;
        let pk_pq_sig = PublicKeyInfo { algorithm: pq_alg, key: r.field()?.to_vec() };
        let cl_alg = AlgorithmId::signature(r.str_field()?)?;
        let pk_classical_sig = PublicKeyInfo { algorithm: cl_alg, key: r.field()?.to_vec() };
        let issuer_pq_alg = AlgorithmId::signature(r.str_field()?)?;
        let issuer_classical_alg = AlgorithmId::signature(r.str_field()?)?;
        r.finish()?;
        Ok(HybridCertificate {
            subject,
            issuer,
            validity,
            pk_pq_sig,
            pk_classical_sig,
            issuer_pq_alg,
            issuer_classical_alg,
            sig_pq,
            sig_classical,
        })
    }

    pub fn to_file_bytes(&self) -> Vec<u8> {
        let mut out = CERT_MAGIC.to_vec();
        out.extend_from_slice(&self.encode());
        out
    }

    pub fn from_file_bytes(bytes: &[u8]) -> Result<Self, PkiError> {
        Self::decode(strip_magic(bytes, CERT_MAGIC)?)
    }

    pub fn is_self_issued(&self) -> bool {
        self.subject == self.issuer
    }

    /// Checks both signatures against the issuer's keys.
    fn check_signatures(&self, by: &HybridCertificate) -> Result<(), ChainFailure> {
        let tbs = self.raw_tbs();
        let checks = [
            (SignatureKind::PostQuantum, &self.sig_pq, self.issuer_pq_alg, &by.pk_pq_sig),
            (SignatureKind::Classical, &self.sig_classical, self.issuer_classical_alg, &by.pk_classical_sig),
        ];
        for (kind, sig, alg, key) in checks {
            if sig.is_empty() {
                return Err(ChainFailure::MissingSignature { subject: self.subject.clone(), kind });
            }
            if alg != key.algorithm || !suite::verify(alg, &key.key, &tbs, sig) {
                return Err(ChainFailure::BadSignature { subject: self.subject.clone(), kind });
            }
        }
        Ok(())
    }
}

fn strip_magic(bytes: &[u8], magic: [u8; 4]) -> Result<&[u8], PkiError> {
    bytes
        .strip_prefix(&magic[..])
        .ok_or_else(|| PkiError::BadMagic { expected: String::from_utf8_lossy(&magic).into_owned() })
}

/// Issues a certificate signed with both of the issuer's keys.
pub fn issue(issuer: &Issuer<'_>, subject: &Subject<'_>, validity: Validity) -> Result<HybridCertificate, PkiError> {
    let (Some(pq), Some(classical)) = (issuer.pq, issuer.classical) else {
        return Err(PkiError::MissingKey(issuer.name.to_owned()));
    };
    let mut cert = HybridCertificate {
        subject: subject.name.to_owned(),
        issuer: issuer.name.to_owned(),
        validity,
        pk_pq_sig: subject.pq.clone(),
        pk_classical_sig: subject.classical.clone(),
        issuer_pq_alg: pq.algorithm,
        issuer_classical_alg: classical.algorithm,
        sig_pq: Vec::new(),
        sig_classical: Vec::new(),
    };
    let tbs = cert.raw_tbs();
    cert.sig_pq = pq.sign(&tbs)?;
    cert.sig_classical = classical.sign(&tbs)?;
    Ok(cert)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertChain {
    pub leaf: HybridCertificate,
    pub intermediate: HybridCertificate,
    pub root: HybridCertificate,
}

impl CertChain {
    /// The part sent during a handshake; the root stays with the verifier.
    pub fn presented(&self) -> Vec<u8> {
        encode_presented(&self.leaf, &self.intermediate)
    }

    pub fn to_file_bytes(&self) -> Vec<u8> {
        let mut out = CHAIN_MAGIC.to_vec();
        for c in [&self.leaf, &self.intermediate, &self.root] {
            put_field(&mut out, &c.encode()).expect("certificate fits a length prefix");
        }
        out
    }

    pub fn from_file_bytes(bytes: &[u8]) -> Result<Self, PkiError> {
        let mut r = Reader::new(strip_magic(bytes, CHAIN_MAGIC)?);
        let leaf = HybridCertificate::decode(r.field()?)?;
        let intermediate = HybridCertificate::decode(r.field()?)?;
        let root = HybridCertificate::decode(r.field()?)?;
        r.finish()?;
        Ok(CertChain { leaf, intermediate, root })
    }
}

/// `field(leaf) field(intermediate)`.
pub fn encode_presented(leaf: &HybridCertificate, intermediate: &HybridCertificate) -> Vec<u8> {
    let mut out = Vec::new();
    for c in [leaf, intermediate] {
        put_field(&mut out, &c.encode()).expect("certificate fits a length prefix");
    }
    out
}

pub fn decode_presented(bytes: &[u8]) -> Result<(HybridCertificate, HybridCertificate), PkiError> {
    let mut r = Reader::new(bytes);
    let leaf = HybridCertificate::decode(r.field()?)?;
    let intermediate = HybridCertificate::decode(r.field()?)?;
    r.finish()?;
    Ok((leaf, intermediate))
}

/// Verifies the three-certificate chain at time `now`: the root must equal
/// the trust anchor byte for byte, issuer names must link up, both
/// signatures of every certificate must verify, and every validity window
/// must contain `now`.
pub fn verify_chain(chain: &CertChain, trust_anchor: &HybridCertificate, now: u64) -> Result<(), ChainFailure> {
    if chain.root.encode() != trust_anchor.encode() {
        return Err(ChainFailure::AnchorMismatch);
    }
    let links = [(&chain.root, &chain.root), (&chain.intermediate, &chain.root), (&chain.leaf, &chain.intermediate)];
    for (cert, by) in links {
        if cert.issuer != by.subject {
            return Err(ChainFailure::IssuerMismatch {
                subject: cert.subject.clone(),
                issuer: cert.issuer.clone(),
                expected: by.subject.clone(),
            });
        }
        cert.check_signatures(by)?;
        if now < cert.validity.not_before {
            return Err(ChainFailure::NotYetValid { subject: cert.subject.clone() });
        }
        if now > cert.validity.not_after {
            return Err(ChainFailure::Expired { subject: cert.subject.clone() });
        }
    }
    Ok(())
}

/// A root, an intermediate, and the means to issue leaves under them.
pub struct TwoLevelCa {
    pub root: Identity,
    pub root_cert: HybridCertificate,
    pub intermediate: Identity,
    pub intermediate_cert: HybridCertificate,
}

impl TwoLevelCa {
    /// Generates both CA layers with ML-DSA-87 and Ed25519 keys.
    pub fn generate(now: u64, rng: &mut dyn CryptoRngCore) -> Result<Self, PkiError> {
        let pq = AlgorithmId::signature(CA_PQ_ALG)?;
        let cl = AlgorithmId::signature(CLASSICAL_ALG)?;
        Self::generate_with(pq, cl, now, rng)
    }

    pub fn generate_with(
        pq: AlgorithmId,
        classical: AlgorithmId,
        now: u64,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<Self, PkiError> {
        let root = Identity::generate("Root CA", pq, classical, rng)?;
        let root_cert = issue(&root.issuer(), &root.subject(), Validity::days_from(now, 3650))?;
        let intermediate = Identity::generate("Intermediate CA", pq, classical, rng)?;
        let intermediate_cert = issue(&root.issuer(), &intermediate.subject(), Validity::days_from(now, 1825))?;
        Ok(TwoLevelCa { root, root_cert, intermediate, intermediate_cert })
    }

    /// Generates an end-entity identity with a `leaf_pq` key plus Ed25519 and
    /// certifies it.
    pub fn issue_leaf(
        &self,
        name: &str,
        leaf_pq: AlgorithmId,
        now: u64,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<(Identity, CertChain), PkiError> {
        let id = Identity::generate(name, leaf_pq, AlgorithmId::signature(CLASSICAL_ALG)?, rng)?;
        let leaf = issue(&self.intermediate.issuer(), &id.subject(), Validity::days_from(now, 365))?;
        let chain = CertChain { leaf, intermediate: self.intermediate_cert.clone(), root: self.root_cert.clone() };
        Ok((id, chain))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha20Rng;
    use rand_core::SeedableRng;

    const NOW: u64 = 1_760_000_000;

    fn test_ca(rng: &mut ChaCha20Rng) -> TwoLevelCa {
        let t = AlgorithmId::signature("TestDSS").unwrap();
        let e = AlgorithmId::signature("Ed25519").unwrap();
        TwoLevelCa::generate_with(t, e, NOW, rng).unwrap()
    }

    #[test]
    fn self_issued_root_verifies() {
        let mut rng = ChaCha20Rng::from_seed([1; 32]);
        let ca = test_ca(&mut rng);
        assert!(ca.root_cert.is_self_issued());
        assert_eq!(ca.root_cert.check_signatures(&ca.root_cert), Ok(()));
    }

    #[test]
    fn chain_verifies_and_round_trips() {
        let mut rng = ChaCha20Rng::from_seed([2; 32]);
        let ca = test_ca(&mut rng);
        let (_, chain) = ca.issue_leaf("alice", AlgorithmId::signature("TestDSS").unwrap(), NOW, &mut rng).unwrap();
        assert_eq!(verify_chain(&chain, &ca.root_cert, NOW), Ok(()));
        let back = CertChain::from_file_bytes(&chain.to_file_bytes()).unwrap();
        assert_eq!(back, chain);
        let (leaf, inter) = decode_presented(&chain.presented()).unwrap();
        assert_eq!((leaf, inter), (chain.leaf.clone(), chain.intermediate.clone()));
    }

    #[test]
    fn size_formula() {
        let mut rng = ChaCha20Rng::from_seed([3; 32]);
        let ca = test_ca(&mut rng);
        let c = &ca.intermediate_cert;
        let names: usize = [c.pk_pq_sig.algorithm, c.pk_classical_sig.algorithm, c.issuer_pq_alg, c.issuer_classical_alg]
            .iter()
            .map(|a| a.name().len())
            .sum();
        let tbs = 46 + c.subject.len() + c.issuer.len() + c.pk_pq_sig.key.len() + c.pk_classical_sig.key.len() + names;
        assert_eq!(c.raw_tbs().len(), tbs);
        assert_eq!(c.encode().len(), 9 + tbs + c.sig_pq.len() + c.sig_classical.len());
    }

    #[test]
    fn missing_issuer_key() {
        let mut rng = ChaCha20Rng::from_seed([4; 32]);
        let ca = test_ca(&mut rng);
        let half = Issuer { name: "Root CA", pq: Some(&ca.root.pq), classical: None };
        assert_eq!(
            issue(&half, &ca.intermediate.subject(), Validity::days_from(NOW, 1)).err(),
            Some(PkiError::MissingKey("Root CA".into()))
        );
    }

    #[test]
    fn failures() {
        let mut rng = ChaCha20Rng::from_seed([5; 32]);
        let ca = test_ca(&mut rng);
        let (_, chain) = ca.issue_leaf("bob", AlgorithmId::signature("TestDSS").unwrap(), NOW, &mut rng).unwrap();

        let mut stripped = chain.clone();
        stripped.leaf.sig_classical.clear();
        assert_eq!(
            verify_chain(&stripped, &ca.root_cert, NOW),
            Err(ChainFailure::MissingSignature { subject: "bob".into(), kind: SignatureKind::Classical })
        );

        let mut expired = chain.clone();
        expired.intermediate = issue(
            &ca.root.issuer(),
            &ca.intermediate.subject(),
            Validity { not_before: NOW - 100, not_after: NOW - 1 },
        )
        .unwrap();
        assert_eq!(
            verify_chain(&expired, &ca.root_cert, NOW),
            Err(ChainFailure::Expired { subject: "Intermediate CA".into() })
        );

        let other = test_ca(&mut rng);
        assert_eq!(verify_chain(&chain, &other.root_cert, NOW), Err(ChainFailure::AnchorMismatch));

        let mut forged = chain.clone();
        forged.leaf.subject = "mallory".into();
        assert!(matches!(verify_chain(&forged, &ca.root_cert, NOW), Err(ChainFailure::BadSignature { .. })));

        assert!(matches!(verify_chain(&chain, &ca.root_cert, NOW + 400 * 86_400), Err(ChainFailure::Expired { .. })));
    }

    #[test]
    fn identity_file_round_trip() {
        let mut rng = ChaCha20Rng::from_seed([6; 32]);
        let id = Identity::generate(
            "carol",
            AlgorithmId::signature("Falcon-512").unwrap(),
            AlgorithmId::signature("Ed25519").unwrap(),
            &mut rng,
        )
        .unwrap();
        assert_eq!(Identity::from_file_bytes(&id.to_file_bytes()).unwrap(), id);
        assert!(matches!(Identity::from_file_bytes(b"VMC1"), Err(PkiError::BadMagic { .. })));
    }
}
