//! Initiator and responder state machines.
//!
//! One stage is eight messages:
//!
//! ```text
//! I -> R  m1  pk_c, pk_pq, n_I
//! R -> I  m2  ct_c, ct_pq, n_R
//! R -> I  m3  cert_R              sealed under tk_shs
//! R -> I  m4  sig_R over l13||H2  sealed under tk_shs
//! R -> I  m5  tau_R over H3       sealed under tk_shs
//! I -> R  m6  cert_I              sealed under tk_chs
//! I -> R  m7  sig_I over l14||H5  sealed under tk_chs
//! I -> R  m8  tau_I over H6       sealed under tk_chs
//! ```
//!
//! A [`Session`] consumes one wire message at a time and returns what it
//! wants sent. The initiator accepts after producing m8, the responder after
//! verifying it. Any failure puts the session in `Reject`, which is final.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::pki::{ChainFailure, CertChain, HybridCertificate, PkiError};
use crate::qkd::{QkdError, QkdProvider};
use crate::schedule::ScheduleError;
use crate::suite::{CipherSuite, SuiteError};
use crate::wire::WireError;
use crate::Secret;

mod session;
mod setup;
mod store;
mod transport;

pub use session::{EphemeralKeys, Session, StageRecord};
pub use setup::{PairSetup, INITIATOR_ID, RESPONDER_ID};
pub use store::{SessionId, SessionStore};
pub use transport::{
    drive, run_stage, ChannelTransport, Direction, FramedTransport, MemoryLink, StageError, Transport, FRAME_OVERHEAD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Initiator,
    Responder,
}

impl Role {
    pub fn peer(self) -> Role {
        match self {
            Role::Initiator => Role::Responder,
            Role::Responder => Role::Initiator,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Initiator => "init",
            Role::Responder => "resp",
        })
    }
}

/// Status of the current stage. `Bottom` means no stage has started.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Bottom,
    Active,
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AuthMethod {
    Psk,
    Dss,
}

impl fmt::Display for AuthMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AuthMethod::Psk => "PSK",
            AuthMethod::Dss => "DSS",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthMode {
    PskOnly,
    DssOnly,
    Both,
}

impl AuthMode {
    pub fn methods(self) -> BTreeSet<AuthMethod> {
        match self {
            AuthMode::PskOnly => [AuthMethod::Psk].into(),
            AuthMode::DssOnly => [AuthMethod::Dss].into(),
            AuthMode::Both => [AuthMethod::Psk, AuthMethod::Dss].into(),
        }
    }
}

/// Long-term authentication material of one party.
#[derive(Debug, Clone, Default)]
pub struct AuthConfig {
    pub psk: Option<Secret>,
    pub psk_id: Option<String>,
    pub local_cert_chain: Option<CertChain>,
    /// Secret key matching the leaf's post-quantum public key.
    pub local_sign_key: Option<Secret>,
    pub trust_anchor: Option<HybridCertificate>,
}

impl AuthConfig {
    pub fn psk(psk: impl Into<Secret>) -> Self {
        AuthConfig { psk: Some(psk.into()), ..Default::default() }
    }

    pub fn certificate(chain: CertChain, sign_key: Secret, trust_anchor: HybridCertificate) -> Self {
        AuthConfig {
            local_cert_chain: Some(chain),
            local_sign_key: Some(sign_key),
            trust_anchor: Some(trust_anchor),
            ..Default::default()
        }
    }

    pub fn with_psk(mut self, psk: impl Into<Secret>) -> Self {
        self.psk = Some(psk.into());
        self
    }

    /// Which methods this configuration activates.
    pub fn mode(&self) -> Result<AuthMode, HandshakeError> {
        let psk = match &self.psk {
            Some(p) if p.is_empty() => return Err(HandshakeError::Config("pre-shared key is empty".into())),
            Some(_) => true,
            None => false,
        };
        let dss = match (&self.local_cert_chain, &self.local_sign_key) {
            (Some(_), Some(_)) => true,
            (None, None) => false,
            _ => {
                return Err(HandshakeError::Config(
                    "a certificate chain and its signing key must be configured together".into(),
                ))
            }
        };
        if dss && self.trust_anchor.is_none() {
            return Err(HandshakeError::Config("certificate authentication needs a trust anchor".into()));
        }
        match (psk, dss) {
            (true, true) => Ok(AuthMode::Both),
            (true, false) => Ok(AuthMode::PskOnly),
            (false, true) => Ok(AuthMode::DssOnly),
            (false, false) => {
                Err(HandshakeError::Config("configure a pre-shared key, a certificate, or both".into()))
            }
        }
    }
}

/// How both peers pick the QKD key handle for a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QkdHandlePolicy {
    /// `index = offset + stage`.
    StageNumber { offset: u64 },
    /// `index = (H(n_I || n_R) mod 2^32) + stage`, reading the hash big-endian.
    NonceDerived,
}

#[derive(Clone)]
pub struct SessionConfig {
    pub suite: CipherSuite,
    pub auth: AuthConfig,
    /// Expected subject of the peer's leaf certificate.
    pub peer_id: String,
    pub qkd: Arc<dyn QkdProvider>,
    pub qkd_stream: String,
    pub qkd_handles: QkdHandlePolicy,
    /// Time used for certificate validity, seconds since the epoch. `None`
    /// reads the system clock.
    pub now: Option<u64>,
}

impl fmt::Debug for SessionConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SessionConfig")
            .field("suite", &self.suite.to_string())
            .field("peer_id", &self.peer_id)
            .field("qkd_stream", &self.qkd_stream)
            .field("qkd_handles", &self.qkd_handles)
            .finish_non_exhaustive()
    }
}

/// What a stage yields on accept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HandshakeOutput {
    pub ms: Secret,
    pub cats: Secret,
    pub sats: Secret,
    pub stage: u32,
    pub peer_auth: BTreeSet<AuthMethod>,
}

impl HandshakeOutput {
    /// The master secret as a MACsec MSK, hex encoded.
    pub fn msk_hex(&self) -> String {
        self.ms.to_hex()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HandshakeError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Suite(#[from] SuiteError),
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error("expected message {expected}, got message {got}")]
    UnexpectedMessage { expected: u8, got: u8 },
    #[error("AEAD authentication failed on message {0}")]
    AeadAuthFailure(u8),
    #[error("QKD key unavailable: {0}")]
    QkdUnavailable(QkdError),
    #[error("peer certificate rejected: {0}")]
    CertInvalid(ChainFailure),
    #[error("peer signature invalid")]
    SignatureInvalid,
    #[error("peer MAC invalid")]
    MacInvalid,
    #[error("peer {0}")]
    ModeMismatch(&'static str),
    #[error("key schedule: {0}")]
    Schedule(ScheduleError),
    #[error("session is {0:?}")]
    NotActive(Status),
}

impl HandshakeError {
    /// Short machine-friendly name.
    pub fn reason(&self) -> &'static str {
        match self {
            HandshakeError::Config(_) => "Config",
            HandshakeError::Suite(_) => "Suite",
            HandshakeError::MalformedMessage(_) => "MalformedMessage",
            HandshakeError::UnexpectedMessage { .. } => "UnexpectedMessage",
            HandshakeError::AeadAuthFailure(_) => "AeadAuthFailure",
            HandshakeError::QkdUnavailable(_) => "QkdUnavailable",
            HandshakeError::CertInvalid(_) => "CertInvalid",
            HandshakeError::SignatureInvalid => "SignatureInvalid",
            HandshakeError::MacInvalid => "MacInvalid",
            HandshakeError::ModeMismatch(_) => "ModeMismatch",
            HandshakeError::Schedule(_) => "Schedule",
            HandshakeError::NotActive(_) => "NotActive",
        }
    }
}

impl From<WireError> for HandshakeError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::AeadAuthFailure(i) => HandshakeError::AeadAuthFailure(i),
            WireError::OutOfOrder { expected, got } => HandshakeError::UnexpectedMessage { expected, got },
            other => HandshakeError::MalformedMessage(other.to_string()),
        }
    }
}

impl From<ScheduleError> for HandshakeError {
    fn from(e: ScheduleError) -> Self {
        match e {
            ScheduleError::Wire(w) => w.into(),
            other => HandshakeError::Schedule(other),
        }
    }
}

impl From<PkiError> for HandshakeError {
    fn from(e: PkiError) -> Self {
        HandshakeError::CertInvalid(ChainFailure::Malformed(e.to_string()))
    }
}

impl From<QkdError> for HandshakeError {
    fn from(e: QkdError) -> Self {
        HandshakeError::QkdUnavailable(e)
    }
}
