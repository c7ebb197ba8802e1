use std::collections::BTreeSet;

use rand_core::CryptoRngCore;

use super::{AuthMethod, AuthMode, HandshakeError, HandshakeOutput, QkdHandlePolicy, Role, SessionConfig, Status};
use crate::pki::{self, CertChain, ChainFailure, HybridCertificate};
use crate::qkd::{QkdError, QkdKeyHandle};
use crate::schedule::{self, labels, HandshakeSecrets, StageInputs, StageKeys};
use crate::suite::{self, KemKeyPair};
use crate::wire::{self, Context, HandshakeMessage, Transcript};
use crate::Secret;

/// Ephemeral secrets of one stage. For the initiator `pq` and `classical`
/// are the KEM secret keys; for the responder they are the encapsulated
/// shared secrets. `quantum` is the QKD key.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EphemeralKeys {
    pub pq: Option<Secret>,
    pub classical: Option<Secret>,
    pub quantum: Option<Secret>,
}

/// Everything a session remembers about one stage.
#[derive(Debug, Clone)]
pub struct StageRecord {
    pub stage: u32,
    pub status: Status,
    /// Wire bytes in the order they were sent or received.
    pub sent: Vec<Vec<u8>>,
    pub received: Vec<Vec<u8>>,
    pub sec_state_in: Secret,
    pub ephemeral: EphemeralKeys,
    /// Present only once the stage accepted.
    pub keys: Option<StageKeys>,
    pub output: Option<HandshakeOutput>,
    pub error: Option<HandshakeError>,
}

#[derive(Default)]
struct Pending {
    transcript: Transcript,
    next: u8,
    kem_c: Option<KemKeyPair>,
    kem_pq: Option<KemKeyPair>,
    n_i: Vec<u8>,
    hs: Option<HandshakeSecrets>,
    keys: Option<StageKeys>,
    peer_leaf: Option<HybridCertificate>,
    verified: BTreeSet<AuthMethod>,
}

impl Pending {
    fn hs(&self) -> &HandshakeSecrets {
        match (&self.hs, &self.keys) {
            (Some(hs), _) => hs,
            (None, Some(keys)) => &keys.handshake,
            (None, None) => unreachable!("handshake secrets are derived on message 2"),
        }
    }
}

/// One party's protocol instance.
pub struct Session {
    role: Role,
    config: SessionConfig,
    mode: AuthMode,
    rng: Box<dyn CryptoRngCore + Send>,
    sec_state: Secret,
    stages: Vec<StageRecord>,
    pending: Option<Pending>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("role", &self.role)
            .field("peer_id", &self.config.peer_id)
            .field("stage", &self.stage())
            .field("status", &self.status())
            .finish()
    }
}

impl Session {
    pub fn new(
        role: Role,
        config: SessionConfig,
        rng: impl CryptoRngCore + Send + 'static,
    ) -> Result<Self, HandshakeError> {
        config.suite.validate()?;
        let mode = config.auth.mode()?;
        if mode != AuthMode::PskOnly {
            if config.suite.dss.is_none() {
                return Err(HandshakeError::Config("certificate authentication needs a signature scheme".into()));
            }
            let chain = config.auth.local_cert_chain.as_ref().expect("checked by mode()");
            if chain.leaf.pk_pq_sig.algorithm != config.suite.dss {
                return Err(HandshakeError::Config(format!(
                    "leaf key is {}, suite signs with {}",
                    chain.leaf.pk_pq_sig.algorithm, config.suite.dss
                )));
            }
        }
        Ok(Session {
            role,
            config,
            mode,
            rng: Box::new(rng),
            sec_state: Secret::empty(),
            stages: Vec::new(),
            pending: None,
        })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn peer_id(&self) -> &str {
        &self.config.peer_id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn mode(&self) -> AuthMode {
        self.mode
    }

    /// Current stage number; 0 before the first stage starts.
    pub fn stage(&self) -> u32 {
        self.stages.len() as u32
    }

    pub fn status(&self) -> Status {
        self.stages.last().map_or(Status::Bottom, |r| r.status)
    }

    /// SecState that the next stage will consume.
    pub fn sec_state(&self) -> &Secret {
        &self.sec_state
    }

    pub fn stages(&self) -> &[StageRecord] {
        &self.stages
    }

    /// Record of stage `t` (1-based).
    pub fn stage_record(&self, t: u32) -> Option<&StageRecord> {
        t.checked_sub(1).and_then(|i| self.stages.get(i as usize))
    }

    pub fn last_output(&self) -> Option<&HandshakeOutput> {
        self.stages.last().and_then(|r| r.output.as_ref())
    }

    /// Overwrites the chained SecState. Only useful for exercising chaining
    /// failures.
    #[doc(hidden)]
    pub fn overwrite_sec_state(&mut self, sec_state: Secret) {
        self.sec_state = sec_state;
    }

    /// Starts the next stage as initiator and returns m1.
    pub fn start(&mut self) -> Result<Vec<u8>, HandshakeError> {
        if self.role != Role::Initiator {
            return Err(HandshakeError::Config("only the initiator starts a stage".into()));
        }
        match self.status() {
            Status::Bottom | Status::Accept => {}
            s => return Err(HandshakeError::NotActive(s)),
        }
        self.begin_stage();
        let mut p = self.pending.take().expect("stage just began");
        let result = self.initiator_m1(&mut p);
        let mut out = self.finish_step(p, result)?;
        Ok(out.remove(0))
    }

    /// Processes one incoming wire message and returns the messages to send.
    /// A responder that is idle or has accepted treats the message as the m1
    /// of a new stage.
    pub fn handle(&mut self, wire_msg: &[u8]) -> Result<Vec<Vec<u8>>, HandshakeError> {
        if self.role == Role::Responder && matches!(self.status(), Status::Bottom | Status::Accept) {
            self.begin_stage();
        }
        if self.status() != Status::Active {
            return Err(HandshakeError::NotActive(self.status()));
        }
        self.current().received.push(wire_msg.to_vec());
        let mut p = self.pending.take().expect("active stage has pending state");
        let result = match (self.role, p.next) {
            (Role::Responder, 1) => self.responder_m1(&mut p, wire_msg),
            (Role::Initiator, 2) => self.initiator_m2(&mut p, wire_msg).map(|()| Vec::new()),
            (Role::Initiator, 3) => self.initiator_m3(&mut p, wire_msg).map(|()| Vec::new()),
            (Role::Initiator, 4) => self.initiator_m4(&mut p, wire_msg).map(|()| Vec::new()),
            (Role::Initiator, 5) => self.initiator_m5(&mut p, wire_msg),
            (Role::Responder, 6) => self.responder_m6(&mut p, wire_msg).map(|()| Vec::new()),
            (Role::Responder, 7) => self.responder_m7(&mut p, wire_msg).map(|()| Vec::new()),
            (Role::Responder, 8) => self.responder_m8(&mut p, wire_msg).map(|()| Vec::new()),
            (_, n) => unreachable!("no message {n} expected by {}", self.role),
        };
        self.finish_step(p, result)
    }

    fn begin_stage(&mut self) {
        let stage = self.stage() + 1;
        self.stages.push(StageRecord {
            stage,
            status: Status::Active,
            sent: Vec::new(),
            received: Vec::new(),
            sec_state_in: self.sec_state.clone(),
            ephemeral: EphemeralKeys::default(),
            keys: None,
            output: None,
            error: None,
        });
        let next = match self.role {
            Role::Initiator => 2,
            Role::Responder => 1,
        };
        self.pending = Some(Pending { next, ..Default::default() });
    }

    fn current(&mut self) -> &mut StageRecord {
        self.stages.last_mut().expect("a stage is running")
    }

    fn finish_step(
        &mut self,
        p: Pending,
        result: Result<Vec<Vec<u8>>, HandshakeError>,
    ) -> Result<Vec<Vec<u8>>, HandshakeError> {
        match result {
            Ok(out) => {
                self.current().sent.extend(out.iter().cloned());
                let done = match self.role {
                    Role::Initiator => p.next == 6,
                    Role::Responder => p.next == 9,
                };
                if done {
                    self.accept(p)?;
                } else {
                    self.pending = Some(p);
                }
                Ok(out)
            }
            Err(e) => {
                let rec = self.current();
                rec.status = Status::Reject;
                rec.error = Some(e.clone());
                Err(e)
            }
        }
    }

    fn accept(&mut self, p: Pending) -> Result<(), HandshakeError> {
        let expected = self.mode.methods();
        let stage = self.stage();
        let rec = self.current();
        if p.verified != expected {
            let e = HandshakeError::ModeMismatch("did not complete every configured authentication method");
            rec.status = Status::Reject;
            rec.error = Some(e.clone());
            return Err(e);
        }
        let keys = p.keys.expect("application secrets derived before accept");
        rec.output = Some(HandshakeOutput {
            ms: keys.ms.clone(),
            cats: keys.cats.clone(),
            sats: keys.sats.clone(),
            stage,
            peer_auth: p.verified,
        });
        let next = keys.sec_state_next.clone();
        rec.keys = Some(keys);
        rec.status = Status::Accept;
        self.sec_state = next;
        Ok(())
    }

    fn uses_dss(&self) -> bool {
        self.mode != AuthMode::PskOnly
    }

    fn psk_bytes(&self) -> &[u8] {
        self.config.auth.psk.as_ref().map_or(&[], Secret::as_bytes)
    }

    fn random(&mut self, n: usize) -> Vec<u8> {
        let mut v = vec![0u8; n];
        self.rng.fill_bytes(&mut v);
        v
    }

    fn check_nonce(&self, n: &[u8]) -> Result<(), HandshakeError> {
        if n.len() != self.config.suite.lambda_bytes() {
            return Err(HandshakeError::MalformedMessage(format!(
                "nonce has {} bytes, expected {}",
                n.len(),
                self.config.suite.lambda_bytes()
            )));
        }
        Ok(())
    }

    fn check_classical_presence(&self, field: &[u8], what: &str) -> Result<(), HandshakeError> {
        if self.config.suite.kem_c.is_none() != field.is_empty() {
            return Err(HandshakeError::MalformedMessage(format!(
                "{what} must be {} with classical KEM {}",
                if field.is_empty() { "present" } else { "empty" },
                self.config.suite.kem_c
            )));
        }
        Ok(())
    }

    fn fetch_qkd(&mut self, n_i: &[u8], n_r: &[u8]) -> Result<Secret, HandshakeError> {
        let t = self.stage() as u64;
        let index = match self.config.qkd_handles {
            QkdHandlePolicy::StageNumber { offset } => offset + t,
            QkdHandlePolicy::NonceDerived => {
                let h = suite::hash(&[n_i, n_r].concat());
                let low = u32::from_be_bytes(h[h.len() - 4..].try_into().expect("4 bytes"));
                u64::from(low) + t
            }
        };
        let handle = QkdKeyHandle::new(self.config.qkd_stream.clone(), index);
        let lambda = self.config.suite.security_param;
        let key = self.config.qkd.get_key(&handle, lambda)?;
        let need = self.config.suite.lambda_bytes();
        if key.len() != need {
            return Err(QkdError::WrongLength { index, got: key.len(), need }.into());
        }
        self.current().ephemeral.quantum = Some(key.clone());
        Ok(key)
    }

    fn derive_handshake(&self, p: &mut Pending, ss_c: &Secret, ss_pq: &Secret, k_q: &Secret) -> Result<(), HandshakeError> {
        let hs = schedule::derive_handshake_secrets(&StageInputs {
            ss_c: ss_c.as_bytes(),
            ss_pq: ss_pq.as_bytes(),
            k_q: k_q.as_bytes(),
            sec_state: self.sec_state.as_bytes(),
            transcript: &p.transcript,
        })?;
        p.hs = Some(hs);
        Ok(())
    }

    fn derive_application(p: &mut Pending) -> Result<(), HandshakeError> {
        let hs = p.hs.take().expect("handshake secrets derived");
        p.keys = Some(schedule::derive_application_secrets(hs, &p.transcript)?);
        Ok(())
    }

    /// Encodes message `index` around `payload`, records the plaintext in the
    /// transcript and returns the sealed bytes.
    fn seal_out(p: &mut Pending, index: u8, payload: Vec<u8>, key: &Secret) -> Result<Vec<u8>, HandshakeError> {
        let plain = HandshakeMessage::with_payload(index, payload)?.encode()?;
        let sealed = wire::seal_message(key.as_bytes(), index, &plain)?;
        p.transcript.push(plain)?;
        Ok(sealed)
    }

    /// Opens message `index`, checks its type, and returns the plaintext
    /// encoding and payload. Does not touch the transcript.
    fn open_in(index: u8, sealed: &[u8], key: &Secret) -> Result<(Vec<u8>, Vec<u8>), HandshakeError> {
        let plain = wire::open_message(key.as_bytes(), index, sealed)?;
        let msg = HandshakeMessage::decode(&plain)?;
        if msg.index() != index {
            return Err(HandshakeError::UnexpectedMessage { expected: index, got: msg.index() });
        }
        let payload = msg.payload().expect("sealed messages carry one payload").to_vec();
        Ok((plain, payload))
    }

    fn sign_context(&self, label: &[u8], context: &[u8]) -> Result<Vec<u8>, HandshakeError> {
        if !self.uses_dss() {
            return Ok(Vec::new());
        }
        let sk = self.config.auth.local_sign_key.as_ref().expect("checked by mode()");
        Ok(suite::sign(self.config.suite.dss, sk.as_bytes(), &[label, context].concat())?)
    }

    fn presented_chain(&self) -> Vec<u8> {
        match (&self.config.auth.local_cert_chain, self.uses_dss()) {
            (Some(chain), true) => chain.presented(),
            _ => Vec::new(),
        }
    }

    fn check_peer_chain(&self, p: &mut Pending, payload: &[u8]) -> Result<(), HandshakeError> {
        match (self.uses_dss(), payload.is_empty()) {
            (false, true) => return Ok(()),
            (false, false) => return Err(HandshakeError::ModeMismatch("sent a certificate while DSS is off")),
            (true, true) => return Err(HandshakeError::ModeMismatch("sent no certificate")),
            (true, false) => {}
        }
        let (leaf, intermediate) = pki::decode_presented(payload)?;
        let anchor = self.config.auth.trust_anchor.clone().expect("checked by mode()");
        let chain = CertChain { leaf, intermediate, root: anchor.clone() };
        let now = self.config.now.unwrap_or_else(pki::unix_now);
        pki::verify_chain(&chain, &anchor, now).map_err(HandshakeError::CertInvalid)?;
        if chain.leaf.subject != self.config.peer_id {
            return Err(HandshakeError::CertInvalid(ChainFailure::SubjectMismatch {
                expected: self.config.peer_id.clone(),
                got: chain.leaf.subject.clone(),
            }));
        }
        if chain.leaf.pk_pq_sig.algorithm != self.config.suite.dss {
            return Err(HandshakeError::CertInvalid(ChainFailure::Malformed(format!(
                "leaf key is {}, expected {}",
                chain.leaf.pk_pq_sig.algorithm, self.config.suite.dss
            ))));
        }
        p.peer_leaf = Some(chain.leaf);
        Ok(())
    }

    fn check_peer_signature(&self, p: &mut Pending, label: &[u8], context: &[u8], sig: &[u8]) -> Result<(), HandshakeError> {
        if !self.uses_dss() {
            return if sig.is_empty() {
                Ok(())
            } else {
                Err(HandshakeError::ModeMismatch("sent a signature while DSS is off"))
            };
        }
        let leaf = p.peer_leaf.as_ref().expect("certificate checked first");
        if !suite::verify(self.config.suite.dss, &leaf.pk_pq_sig.key, &[label, context].concat(), sig) {
            return Err(HandshakeError::SignatureInvalid);
        }
        p.verified.insert(AuthMethod::Dss);
        Ok(())
    }

    fn check_peer_mac(&self, p: &mut Pending, finished_key: &Secret, context: &[u8], tag: &[u8]) -> Result<(), HandshakeError> {
        let key = schedule::mac_key(self.psk_bytes(), finished_key.as_bytes());
        if !suite::mac_verify(key.as_bytes(), context, tag) {
            return Err(HandshakeError::MacInvalid);
        }
        if self.mode != AuthMode::DssOnly {
            p.verified.insert(AuthMethod::Psk);
        }
        Ok(())
    }

    fn own_mac(&self, finished_key: &Secret, context: &[u8]) -> Vec<u8> {
        let key = schedule::mac_key(self.psk_bytes(), finished_key.as_bytes());
        suite::mac_auth(key.as_bytes(), context).to_vec()
    }

    fn initiator_m1(&mut self, p: &mut Pending) -> Result<Vec<Vec<u8>>, HandshakeError> {
        let suite = self.config.suite;
        let kem_c = if suite.kem_c.is_none() { None } else { Some(suite::kem_keygen(suite.kem_c, &mut *self.rng)?) };
        let kem_pq = suite::kem_keygen(suite.kem_pq, &mut *self.rng)?;
        let n_i = self.random(suite.lambda_bytes());
        let m1 = HandshakeMessage::M1 {
            pk_c: kem_c.as_ref().map(|k| k.public_key.clone()).unwrap_or_default(),
            pk_pq: kem_pq.public_key.clone(),
            n_i: n_i.clone(),
        }
        .encode()?;
        p.transcript.push(m1.clone())?;
        let eph = &mut self.current().ephemeral;
        eph.classical = kem_c.as_ref().map(|k| k.secret_key.clone());
        eph.pq = Some(kem_pq.secret_key.clone());
        p.kem_c = kem_c;
        p.kem_pq = Some(kem_pq);
        p.n_i = n_i;
        Ok(vec![m1])
    }

    fn responder_m1(&mut self, p: &mut Pending, m1: &[u8]) -> Result<Vec<Vec<u8>>, HandshakeError> {
        let suite = self.config.suite;
        let HandshakeMessage::M1 { pk_c, pk_pq, n_i } = HandshakeMessage::decode(m1)? else {
            return Err(HandshakeError::UnexpectedMessage { expected: 1, got: m1[0] });
        };
        self.check_nonce(&n_i)?;
        self.check_classical_presence(&pk_c, "pk_c")?;
        p.transcript.push(m1.to_vec())?;

        let (ct_c, ss_c) = if suite.kem_c.is_none() {
            (Vec::new(), Secret::empty())
        } else {
            suite::kem_encaps(suite.kem_c, &pk_c, &mut *self.rng)?
        };
        let (ct_pq, ss_pq) = suite::kem_encaps(suite.kem_pq, &pk_pq, &mut *self.rng)?;
        let n_r = self.random(suite.lambda_bytes());
        let m2 = HandshakeMessage::M2 { ct_c, ct_pq, n_r: n_r.clone() }.encode()?;
        p.transcript.push(m2.clone())?;
        {
            let eph = &mut self.current().ephemeral;
            eph.pq = Some(ss_pq.clone());
            eph.classical = (!ss_c.is_empty()).then(|| ss_c.clone());
        }
        let k_q = self.fetch_qkd(&n_i, &n_r)?;
        self.derive_handshake(p, &ss_c, &ss_pq, &k_q)?;

        let tk = p.hs().tk_shs.clone();
        let m3 = Self::seal_out(p, 3, self.presented_chain(), &tk)?;
        let h2 = p.transcript.context(Context::H2)?;
        let m4 = Self::seal_out(p, 4, self.sign_context(labels::L13, &h2)?, &tk)?;
        let h3 = p.transcript.context(Context::H3)?;
        let tau = self.own_mac(&p.hs().fk_s.clone(), &h3);
        let m5 = Self::seal_out(p, 5, tau, &tk)?;
        Self::derive_application(p)?;
        p.next = 6;
        Ok(vec![m2, m3, m4, m5])
    }

    fn initiator_m2(&mut self, p: &mut Pending, m2: &[u8]) -> Result<(), HandshakeError> {
        let suite = self.config.suite;
        let HandshakeMessage::M2 { ct_c, ct_pq, n_r } = HandshakeMessage::decode(m2)? else {
            return Err(HandshakeError::UnexpectedMessage { expected: 2, got: m2[0] });
        };
        self.check_nonce(&n_r)?;
        self.check_classical_presence(&ct_c, "ct_c")?;
        let ss_c = match &p.kem_c {
            Some(k) => suite::kem_decaps(suite.kem_c, k.secret_key.as_bytes(), &ct_c)?,
            None => Secret::empty(),
        };
        let kem_pq = p.kem_pq.as_ref().expect("generated in m1");
        let ss_pq = suite::kem_decaps(suite.kem_pq, kem_pq.secret_key.as_bytes(), &ct_pq)?;
        p.transcript.push(m2.to_vec())?;
        let n_i = p.n_i.clone();
        let k_q = self.fetch_qkd(&n_i, &n_r)?;
        self.derive_handshake(p, &ss_c, &ss_pq, &k_q)?;
        p.next = 3;
        Ok(())
    }

    fn initiator_m3(&mut self, p: &mut Pending, m3: &[u8]) -> Result<(), HandshakeError> {
        let (plain, cert) = Self::open_in(3, m3, &p.hs().tk_shs)?;
        p.transcript.push(plain)?;
        self.check_peer_chain(p, &cert)?;
        p.next = 4;
        Ok(())
    }

    fn initiator_m4(&mut self, p: &mut Pending, m4: &[u8]) -> Result<(), HandshakeError> {
        let (plain, sig) = Self::open_in(4, m4, &p.hs().tk_shs)?;
        let h2 = p.transcript.context(Context::H2)?;
        self.check_peer_signature(p, labels::L13, &h2, &sig)?;
        p.transcript.push(plain)?;
        p.next = 5;
        Ok(())
    }

    fn initiator_m5(&mut self, p: &mut Pending, m5: &[u8]) -> Result<Vec<Vec<u8>>, HandshakeError> {
        let (plain, tau) = Self::open_in(5, m5, &p.hs().tk_shs)?;
        let h3 = p.transcript.context(Context::H3)?;
        let fk_s = p.hs().fk_s.clone();
        self.check_peer_mac(p, &fk_s, &h3, &tau)?;
        p.transcript.push(plain)?;
        Self::derive_application(p)?;

        let tk = p.hs().tk_chs.clone();
        let m6 = Self::seal_out(p, 6, self.presented_chain(), &tk)?;
        let h5 = p.transcript.context(Context::H5)?;
        let m7 = Self::seal_out(p, 7, self.sign_context(labels::L14, &h5)?, &tk)?;
        let h6 = p.transcript.context(Context::H6)?;
        let tau = self.own_mac(&p.hs().fk_c.clone(), &h6);
        let m8 = Self::seal_out(p, 8, tau, &tk)?;
        p.next = 6;
        Ok(vec![m6, m7, m8])
    }

    fn responder_m6(&mut self, p: &mut Pending, m6: &[u8]) -> Result<(), HandshakeError> {
        let (plain, cert) = Self::open_in(6, m6, &p.hs().tk_chs)?;
        p.transcript.push(plain)?;
        self.check_peer_chain(p, &cert)?;
        p.next = 7;
        Ok(())
    }

    fn responder_m7(&mut self, p: &mut Pending, m7: &[u8]) -> Result<(), HandshakeError> {
        let (plain, sig) = Self::open_in(7, m7, &p.hs().tk_chs)?;
        let h5 = p.transcript.context(Context::H5)?;
        self.check_peer_signature(p, labels::L14, &h5, &sig)?;
        p.transcript.push(plain)?;
        p.next = 8;
        Ok(())
    }

    fn responder_m8(&mut self, p: &mut Pending, m8: &[u8]) -> Result<(), HandshakeError> {
        let (plain, tau) = Self::open_in(8, m8, &p.hs().tk_chs)?;
        let h6 = p.transcript.context(Context::H6)?;
        let fk_c = p.hs().fk_c.clone();
        self.check_peer_mac(p, &fk_c, &h6, &tau)?;
        p.transcript.push(plain)?;
        p.next = 9;
        Ok(())
    }
}
