use std::net::TcpListener;
use std::sync::Arc;

use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

use vmuckle::handshake::{
    drive, run_stage, AuthMethod, AuthMode, ChannelTransport, Direction, FramedTransport, HandshakeError,
    MemoryLink, PairSetup, QkdHandlePolicy, Role, Session, SessionStore, StageError, Status,
};
use vmuckle::pki::{ChainFailure, TwoLevelCa};
use vmuckle::qkd::Simulator;
use vmuckle::suite::{AlgorithmId, CipherSuite};
use vmuckle::wire::{self, HandshakeMessage};
use vmuckle::Secret;

fn setup(kem_c: &str, kem_pq: &str, dss: &str, mode: AuthMode) -> PairSetup {
    let suite = CipherSuite::new(kem_c, kem_pq, dss).unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    PairSetup::generate_with_ca(suite, mode, AlgorithmId::signature("TestDSS").unwrap(), &mut rng).unwrap()
}

fn test_setup(mode: AuthMode) -> PairSetup {
    setup("TestKEM-32", "TestKEM-32", "TestDSS", mode)
}

fn rejected(e: StageError) -> (Role, HandshakeError) {
    match e {
        StageError::Rejected { side, error } => (side, error),
        other => panic!("expected a rejection, got {other}"),
    }
}

#[test]
fn honest_stage_all_modes() {
    for (mode, methods) in [
        (AuthMode::PskOnly, vec![AuthMethod::Psk]),
        (AuthMode::DssOnly, vec![AuthMethod::Dss]),
        (AuthMode::Both, vec![AuthMethod::Psk, AuthMethod::Dss]),
    ] {
        let s = test_setup(mode);
        let (mut i, mut r) = s.sessions(1).unwrap();
        let (oi, or) = run_stage(&mut i, &mut r, &mut MemoryLink::new()).unwrap();
        assert_eq!(oi, or);
        assert_eq!(oi.peer_auth.iter().copied().collect::<Vec<_>>(), methods);
        assert_eq!(i.sec_state(), r.sec_state());
        assert_eq!((i.status(), r.status()), (Status::Accept, Status::Accept));
        assert_eq!(i.stage_record(1).unwrap().keys, r.stage_record(1).unwrap().keys);
    }
}

#[test]
fn real_primitives_with_and_without_classical_kem() {
    for kem_c in ["ECDH-P521", "none"] {
        let s = setup(kem_c, "ML-KEM-768", "ML-DSA-65", AuthMode::Both);
        let (mut i, mut r) = s.sessions(2).unwrap();
        let (oi, or) = run_stage(&mut i, &mut r, &mut MemoryLink::new()).unwrap();
        assert_eq!(oi.ms, or.ms);
        let m1 = HandshakeMessage::decode(&i.stage_record(1).unwrap().sent[0]).unwrap();
        let HandshakeMessage::M1 { pk_c, .. } = m1 else { panic!() };
        assert_eq!(pk_c.is_empty(), kem_c == "none");
    }
}

#[test]
fn psk_only_sends_empty_certificate_and_signature() {
    let s = test_setup(AuthMode::PskOnly);
    let (mut i, mut r) = s.sessions(3).unwrap();
    run_stage(&mut i, &mut r, &mut MemoryLink::new()).unwrap();
    let sent = &r.stage_record(1).unwrap().sent;
    // An empty payload seals to type byte + 3-byte length + 16-byte tag.
    assert_eq!(sent[1].len(), 4 + 16);
    assert_eq!(sent[2].len(), 4 + 16);
    assert_eq!(sent[3].len(), 4 + 48 + 16);
}

#[test]
fn deterministic_m1_and_fresh_nonces() {
    let s = test_setup(AuthMode::PskOnly);
    let (mut a, _) = s.sessions(9).unwrap();
    let (mut b, _) = s.sessions(9).unwrap();
    let m1a = a.start().unwrap();
    assert_eq!(m1a, b.start().unwrap());

    let (mut i, mut r) = s.sessions(10).unwrap();
    let mut link = MemoryLink::new();
    run_stage(&mut i, &mut r, &mut link).unwrap();
    run_stage(&mut i, &mut r, &mut link).unwrap();
    let nonce = |t| match HandshakeMessage::decode(&i.stage_record(t).unwrap().sent[0]).unwrap() {
        HandshakeMessage::M1 { n_i, .. } => n_i,
        _ => unreachable!(),
    };
    assert_ne!(nonce(1), nonce(2));
}

#[test]
fn wrong_psk_is_mac_failure() {
    let mut s = test_setup(AuthMode::PskOnly);
    s.responder.psk = Some(Secret::from([9u8; 32]));
    let (mut i, mut r) = s.sessions(4).unwrap();
    let (side, err) = rejected(run_stage(&mut i, &mut r, &mut MemoryLink::new()).unwrap_err());
    assert_eq!((side, err), (Role::Initiator, HandshakeError::MacInvalid));
    assert_eq!(i.status(), Status::Reject);
}

#[test]
fn bad_signature_is_rejected() {
    // A signing key that does not match the certified key yields a signature
    // that decrypts fine but fails verification.
    let mut s = test_setup(AuthMode::DssOnly);
    let mut rng = ChaCha20Rng::seed_from_u64(97);
    let (_, other) = vmuckle::suite::sig_keygen(s.suite.dss, &mut rng).unwrap();
    s.responder.local_sign_key = Some(other);
    let (mut i, mut r) = s.sessions(5).unwrap();
    let (side, err) = rejected(run_stage(&mut i, &mut r, &mut MemoryLink::new()).unwrap_err());
    assert_eq!((side, err), (Role::Initiator, HandshakeError::SignatureInvalid));
}

#[test]
fn unknown_ca_is_rejected() {
    let mut s = test_setup(AuthMode::DssOnly);
    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let t = AlgorithmId::signature("TestDSS").unwrap();
    let e = AlgorithmId::signature("Ed25519").unwrap();
    let rogue = TwoLevelCa::generate_with(t, e, s.now, &mut rng).unwrap();
    let (id, chain) = rogue.issue_leaf("initiator", t, s.now, &mut rng).unwrap();
    s.initiator.local_cert_chain = Some(chain);
    s.initiator.local_sign_key = Some(id.pq.secret.clone());
    let (mut i, mut r) = s.sessions(7).unwrap();
    let (side, err) = rejected(run_stage(&mut i, &mut r, &mut MemoryLink::new()).unwrap_err());
    assert_eq!(side, Role::Responder);
    assert!(matches!(err, HandshakeError::CertInvalid(ChainFailure::BadSignature { .. })), "{err:?}");
}

#[test]
fn leaf_for_wrong_peer_is_rejected() {
    let mut s = test_setup(AuthMode::DssOnly);
    let ca = s.ca.clone().unwrap();
    let mut rng = ChaCha20Rng::seed_from_u64(98);
    let (id, chain) = ca.issue_leaf("mallory", s.suite.dss, s.now, &mut rng).unwrap();
    s.responder.local_cert_chain = Some(chain);
    s.responder.local_sign_key = Some(id.pq.secret.clone());
    let (mut i, mut r) = s.sessions(8).unwrap();
    let (side, err) = rejected(run_stage(&mut i, &mut r, &mut MemoryLink::new()).unwrap_err());
    assert_eq!(side, Role::Initiator);
    assert!(matches!(err, HandshakeError::CertInvalid(ChainFailure::SubjectMismatch { .. })));
}

#[test]
fn replayed_m7_from_previous_stage_is_rejected() {
    let s = test_setup(AuthMode::Both);
    let (mut i, mut r) = s.sessions(11).unwrap();
    let mut link = MemoryLink::new();
    run_stage(&mut i, &mut r, &mut link).unwrap();
    let old_m7 = i.stage_record(1).unwrap().sent[2].clone();
    let mut link = MemoryLink::with_tamper(move |idx, _, m| Some(if idx == 7 { old_m7.clone() } else { m }));
    let (side, err) = rejected(run_stage(&mut i, &mut r, &mut link).unwrap_err());
    assert_eq!((side, err), (Role::Responder, HandshakeError::AeadAuthFailure(7)));
}

#[test]
fn chained_stages_and_sec_state_corruption() {
    let s = test_setup(AuthMode::PskOnly);
    let (mut i, mut r) = s.sessions(12).unwrap();
    let mut link = MemoryLink::new();
    let mut seen = Vec::new();
    for _ in 0..3 {
        let (oi, _) = run_stage(&mut i, &mut r, &mut link).unwrap();
        assert!(!seen.contains(&oi.ms));
        seen.push(oi.ms);
    }
    assert_eq!(i.stage_record(3).unwrap().sec_state_in, i.stage_record(2).unwrap().keys.as_ref().unwrap().sec_state_next);
    r.overwrite_sec_state(Secret::from([1u8; 48]));
    let (_, err) = rejected(run_stage(&mut i, &mut r, &mut link).unwrap_err());
    assert_eq!(err, HandshakeError::AeadAuthFailure(3));
}

#[test]
fn mismatched_qkd_handles_fail() {
    let s = test_setup(AuthMode::PskOnly);
    let mut ci = s.config(Role::Initiator);
    ci.qkd_handles = QkdHandlePolicy::StageNumber { offset: 5 };
    let mut i = Session::new(Role::Initiator, ci, ChaCha20Rng::seed_from_u64(1)).unwrap();
    let mut r = Session::new(Role::Responder, s.config(Role::Responder), ChaCha20Rng::seed_from_u64(2)).unwrap();
    let (_, err) = rejected(run_stage(&mut i, &mut r, &mut MemoryLink::new()).unwrap_err());
    assert_eq!(err, HandshakeError::AeadAuthFailure(3));
}

#[test]
fn nonce_derived_handles_agree() {
    let mut s = test_setup(AuthMode::PskOnly);
    s.qkd_handles = QkdHandlePolicy::NonceDerived;
    let (mut i, mut r) = s.sessions(13).unwrap();
    run_stage(&mut i, &mut r, &mut MemoryLink::new()).unwrap();
}

#[test]
fn missing_qkd_key_rejects() {
    let mut s = test_setup(AuthMode::PskOnly);
    s.qkd = Arc::new(Simulator::new(&[0; 32], "other-link").unwrap());
    let (mut i, mut r) = s.sessions(14).unwrap();
    let (side, err) = rejected(run_stage(&mut i, &mut r, &mut MemoryLink::new()).unwrap_err());
    assert_eq!(side, Role::Responder);
    assert!(matches!(err, HandshakeError::QkdUnavailable(_)));
}

#[test]
fn malformed_m1_rejects() {
    let s = test_setup(AuthMode::PskOnly);
    let (_, mut r) = s.sessions(15).unwrap();
    assert!(matches!(r.handle(&[1, 0, 0]), Err(HandshakeError::MalformedMessage(_))));
    assert_eq!(r.status(), Status::Reject);
    assert_eq!(r.handle(&[1]), Err(HandshakeError::NotActive(Status::Reject)));
}

#[test]
fn dropped_m8_leaves_responder_active() {
    let s = test_setup(AuthMode::PskOnly);
    let (mut i, mut r) = s.sessions(16).unwrap();
    let mut link = MemoryLink::with_tamper(|idx, dir, m| {
        assert_eq!(dir == Direction::ToResponder, [1, 6, 7, 8].contains(&idx));
        (idx != 8).then_some(m)
    });
    assert!(matches!(run_stage(&mut i, &mut r, &mut link), Err(StageError::Dropped(8))));
    assert_eq!((i.status(), r.status()), (Status::Accept, Status::Active));
}

#[test]
fn config_validation() {
    let s = test_setup(AuthMode::Both);
    let mut c = s.config(Role::Initiator);
    c.auth.psk = Some(Secret::empty());
    assert!(matches!(Session::new(Role::Initiator, c, ChaCha20Rng::seed_from_u64(0)), Err(HandshakeError::Config(_))));
    let mut c = s.config(Role::Initiator);
    c.auth.local_sign_key = None;
    assert!(matches!(Session::new(Role::Initiator, c, ChaCha20Rng::seed_from_u64(0)), Err(HandshakeError::Config(_))));
    let mut c = s.config(Role::Initiator);
    c.auth = Default::default();
    assert!(matches!(Session::new(Role::Initiator, c, ChaCha20Rng::seed_from_u64(0)), Err(HandshakeError::Config(_))));
}

#[test]
fn tcp_and_channel_transports() {
    let s = test_setup(AuthMode::Both);
    let (mut i, mut r) = s.sessions(17).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let resp = std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut t = FramedTransport::new(stream);
        let out = drive(&mut r, &mut t).unwrap();
        (out, t.bytes_sent())
    });
    let mut t = FramedTransport::new(std::net::TcpStream::connect(addr).unwrap());
    let oi = drive(&mut i, &mut t).unwrap();
    let (or, resp_sent) = resp.join().unwrap();
    assert_eq!(oi, or);
    assert_eq!(t.bytes_received(), resp_sent);

    let (mut i, mut r) = s.sessions(18).unwrap();
    let (mut a, mut b) = ChannelTransport::pair();
    let h = std::thread::spawn(move || drive(&mut r, &mut b).unwrap());
    assert_eq!(drive(&mut i, &mut a).unwrap(), h.join().unwrap());
}

#[test]
fn framed_bytes_match_memory_link() {
    let s = test_setup(AuthMode::Both);
    let (mut i, mut r) = s.sessions(19).unwrap();
    let mut link = MemoryLink::new();
    run_stage(&mut i, &mut r, &mut link).unwrap();
    let rec = i.stage_record(1).unwrap();
    let sent: usize = rec.sent.iter().map(|m| m.len() + 4).sum();
    assert_eq!(link.bytes_sent(Role::Initiator), sent as u64);
    assert_eq!(link.total_bytes(), link.log().iter().map(|e| e.2 as u64).sum::<u64>());
}

#[test]
fn session_store_is_shared_across_threads() {
    let s = test_setup(AuthMode::PskOnly);
    let store = Arc::new(SessionStore::new());
    let pairs: Vec<_> = (0..4)
        .map(|k| {
            let (i, r) = s.sessions(100 + k).unwrap();
            (store.insert(i), store.insert(r))
        })
        .collect();
    let handles: Vec<_> = pairs
        .into_iter()
        .map(|(a, b)| {
            let store = store.clone();
            std::thread::spawn(move || {
                let i = store.get(a).unwrap();
                let r = store.get(b).unwrap();
                let (mut i, mut r) = (i.lock().unwrap(), r.lock().unwrap());
                run_stage(&mut i, &mut r, &mut MemoryLink::new()).unwrap().0.ms
            })
        })
        .collect();
    let keys: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert_eq!(store.len(), 8);
    for (n, k) in keys.iter().enumerate() {
        assert!(!keys[..n].contains(k));
    }
}

#[test]
fn sealed_messages_use_message_number_as_associated_data() {
    let key = [3u8; 32];
    let sealed = wire::seal_message(&key, 5, b"x").unwrap();
    assert!(wire::open_message(&key, 5, &sealed).is_ok());
    assert!(wire::open_message(&key, 6, &sealed).is_err());
}
