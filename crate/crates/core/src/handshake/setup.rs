use std::sync::Arc;

use rand_chacha::ChaCha20Rng;
use rand_core::{CryptoRngCore, SeedableRng};

use super::{AuthConfig, AuthMode, HandshakeError, QkdHandlePolicy, Role, Session, SessionConfig};
use crate::pki::{self, Identity, TwoLevelCa};
use crate::qkd::{QkdProvider, Simulator};
use crate::suite::{AlgorithmId, CipherSuite};
use crate::Secret;

pub const INITIATOR_ID: &str = "initiator";
pub const RESPONDER_ID: &str = "responder";

/// Long-term material for two parties that share a CA, a PSK and a QKD link.
#[derive(Clone)]
pub struct PairSetup {
    pub suite: CipherSuite,
    pub mode: AuthMode,
    pub now: u64,
    pub ca: Option<Arc<TwoLevelCa>>,
    pub initiator: AuthConfig,
    pub responder: AuthConfig,
    pub qkd: Arc<dyn QkdProvider>,
    pub qkd_stream: String,
    pub qkd_handles: QkdHandlePolicy,
}

fn pki_err(e: pki::PkiError) -> HandshakeError {
    HandshakeError::Config(e.to_string())
}

impl PairSetup {
    /// CAs sign with ML-DSA-87 and Ed25519.
    pub fn generate(suite: CipherSuite, mode: AuthMode, rng: &mut dyn CryptoRngCore) -> Result<Self, HandshakeError> {
        Self::generate_with_ca(suite, mode, AlgorithmId::signature(pki::CA_PQ_ALG)?, rng)
    }

    pub fn generate_with_ca(
        suite: CipherSuite,
        mode: AuthMode,
        ca_pq: AlgorithmId,
        rng: &mut dyn CryptoRngCore,
    ) -> Result<Self, HandshakeError> {
        let now = pki::unix_now();
        let mut psk = [0u8; 32];
        rng.fill_bytes(&mut psk);
        let mut qkd_seed = [0u8; 32];
        rng.fill_bytes(&mut qkd_seed);

        let (ca, initiator, responder) = if mode == AuthMode::PskOnly {
            (None, AuthConfig::default(), AuthConfig::default())
        } else {
            let ca = TwoLevelCa::generate_with(ca_pq, AlgorithmId::signature(pki::CLASSICAL_ALG)?, now, rng)
                .map_err(pki_err)?;
            let auth = |id: &Identity, chain| {
                AuthConfig::certificate(chain, id.pq.secret.clone(), ca.root_cert.clone())
            };
            let (i_id, i_chain) = ca.issue_leaf(INITIATOR_ID, suite.dss, now, rng).map_err(pki_err)?;
            let (r_id, r_chain) = ca.issue_leaf(RESPONDER_ID, suite.dss, now, rng).map_err(pki_err)?;
            let (i, r) = (auth(&i_id, i_chain), auth(&r_id, r_chain));
            (Some(Arc::new(ca)), i, r)
        };
        let (initiator, responder) = if mode == AuthMode::DssOnly {
            (initiator, responder)
        } else {
            (initiator.with_psk(psk), responder.with_psk(psk))
        };
        let qkd = Simulator::new(&qkd_seed, "link-0").map_err(|e| HandshakeError::Config(e.to_string()))?;
        Ok(PairSetup {
            suite,
            mode,
            now,
            ca,
            initiator,
            responder,
            qkd: Arc::new(qkd),
            qkd_stream: "link-0".into(),
            qkd_handles: QkdHandlePolicy::StageNumber { offset: 0 },
        })
    }

    pub fn config(&self, role: Role) -> SessionConfig {
        let (auth, peer_id) = match role {
            Role::Initiator => (self.initiator.clone(), RESPONDER_ID),
            Role::Responder => (self.responder.clone(), INITIATOR_ID),
        };
        SessionConfig {
            suite: self.suite,
            auth,
            peer_id: peer_id.into(),
            qkd: self.qkd.clone(),
            qkd_stream: self.qkd_stream.clone(),
            qkd_handles: self.qkd_handles,
            now: Some(self.now),
        }
    }

    /// Fresh initiator and responder sessions with seeded generators.
    pub fn sessions(&self, seed: u64) -> Result<(Session, Session), HandshakeError> {
        let rng = |role: u64| ChaCha20Rng::seed_from_u64(seed.wrapping_mul(2).wrapping_add(role));
        Ok((
            Session::new(Role::Initiator, self.config(Role::Initiator), rng(0))?,
            Session::new(Role::Responder, self.config(Role::Responder), rng(1))?,
        ))
    }

    pub fn psk(&self) -> Option<&Secret> {
        self.initiator.psk.as_ref()
    }
}
