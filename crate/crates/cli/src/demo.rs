//! `demo-macsec`: a handshake followed by MKA key distribution between two
//! endpoints. The handshake master secret becomes the MSK, both sides derive
//! CAK/KEK/ICK, the elected key server sends a wrapped SAK and the two sides
//! compare fingerprints of everything they hold.

use std::thread;

use anyhow::{anyhow, bail, ensure, Context, Result};
use clap::Args;
use rand_chacha::ChaCha20Rng;
use rand_core::{CryptoRngCore, RngCore};
use vmuckle::handshake::{drive, ChannelTransport, FramedTransport, PairSetup, Role, Session, Transport};
use vmuckle::mka::{derive_hierarchy, elect_key_server, generate_sak, unwrap_frame, wrap_sak, Member, DEFAULT_CKN};

use crate::describe;
use crate::handshake::{open, session_rng};
use crate::options::{read_psk, session_config, AuthArgs, NetArgs, QkdArgs, SuiteArgs};

#[derive(Args, Debug, Clone)]
pub struct DemoArgs {
    #[command(flatten)]
    pub suite: SuiteArgs,
    #[command(flatten)]
    pub auth: AuthArgs,
    #[command(flatten)]
    pub qkd: QkdArgs,
    #[command(flatten)]
    pub net: NetArgs,
    /// Handshake stages before the MACsec keys are derived from the last one.
    #[arg(long, default_value_t = 1)]
    pub stages: u32,
    #[arg(long, default_value = DEFAULT_CKN)]
    pub ckn: String,
    /// Key-server priority of this endpoint (the initiator when in-process).
    #[arg(long, default_value_t = 128)]
    pub priority: u8,
    /// Priority of the in-process responder.
    #[arg(long, default_value_t = 128)]
    pub peer_priority: u8,
}

/// Fingerprints (first four bytes, hex) of every key one endpoint ended with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DemoReport {
    pub role: Role,
    pub key_server: bool,
    pub msk: String,
    pub cak: String,
    pub kek: String,
    pub ick: String,
    pub sak: String,
}

impl DemoReport {
    pub fn line(&self) -> String {
        format!("MSK {} CAK {} KEK {} ICK {} SAK {}", self.msk, self.cak, self.kek, self.ick, self.sak)
    }
}

fn recv_exact(t: &mut dyn Transport, len: usize, what: &str) -> Result<Vec<u8>> {
    let m = t.recv().with_context(|| format!("receiving {what}"))?;
    ensure!(m.len() == len, "{what} has {} bytes, expected {len}", m.len());
    Ok(m)
}

/// Runs the handshake stages and the MKA exchange for one endpoint.
pub fn endpoint(
    session: &mut Session,
    transport: &mut dyn Transport,
    stages: u32,
    ckn: &str,
    priority: u8,
    rng: &mut dyn CryptoRngCore,
) -> Result<DemoReport> {
    let role = session.role();
    let mut out = None;
    for stage in 1..=stages {
        out = Some(drive(session, transport).map_err(|e| anyhow!("stage {stage}: {}", describe(&e)))?);
    }
    let out = out.context("no stages run")?;
    let h = derive_hierarchy(out.ms.as_bytes(), ckn.as_bytes())?;

    let mut me = Member { member_id: [0; 12], priority };
    rng.fill_bytes(&mut me.member_id);
    let mut hello = me.member_id.to_vec();
    hello.push(priority);
    transport.send(&hello)?;
    let peer_hello = recv_exact(transport, 13, "member announcement")?;
    let peer = Member { member_id: peer_hello[..12].try_into().expect("length checked"), priority: peer_hello[12] };
    ensure!(peer.member_id != me.member_id, "peer announced our member id");
    let server = elect_key_server(&[(me.member_id, me.priority), (peer.member_id, peer.priority)])?;
    let key_server = server == me.member_id;

    let sak = if key_server {
        let mut sci = [0u8; 8];
        sci[..6].copy_from_slice(&me.member_id[..6]);
        sci[7] = 1;
        let rec = generate_sak(&h, sci, 1, rng);
        transport.send(&wrap_sak(&h, &rec, me, rng).encode())?;
        rec.sak
    } else {
        let frame = transport.recv().context("receiving SAK frame")?;
        let (from, rec) = unwrap_frame(&h, &frame)?;
        ensure!(from == peer, "SAK frame from an unexpected member");
        rec.sak
    };

    let report = DemoReport {
        role,
        key_server,
        msk: h.msk.fingerprint(),
        cak: h.cak.fingerprint(),
        kek: h.kek.fingerprint(),
        ick: h.ick.fingerprint(),
        sak: sak.fingerprint(),
    };
    transport.send(report.line().as_bytes())?;
    let theirs = transport.recv().context("receiving peer fingerprints")?;
    if theirs != report.line().as_bytes() {
        bail!("{role}: key mismatch: ours {:?}, peer {:?}", report.line(), String::from_utf8_lossy(&theirs));
    }
    Ok(report)
}

fn print(r: &DemoReport) {
    println!("{} key server: {}", r.role, if r.key_server { "self" } else { "peer" });
    println!("{} {}", r.role, r.line());
    println!("{} keys match peer", r.role);
}

/// Both endpoints in this process, one thread each.
pub fn run_local(args: &DemoArgs, rng: &mut ChaCha20Rng) -> Result<(DemoReport, DemoReport)> {
    if args.auth.cert_chain.is_some() || args.auth.key.is_some() {
        bail!("in-process runs generate their own certificates; use --listen/--connect with certificate files");
    }
    let mut setup = PairSetup::generate(args.suite.suite()?, args.auth.mode(), rng)?;
    if let Some(p) = &args.auth.psk_file {
        if setup.initiator.psk.is_some() {
            let psk = read_psk(p)?;
            setup.initiator.psk = Some(psk.clone());
            setup.responder.psk = Some(psk);
        }
    }
    setup.qkd = args.qkd.provider()?;
    setup.qkd_stream = args.qkd.qkd_stream.clone();
    setup.qkd_handles = args.qkd.policy();
    let (mut init, mut resp) = setup.sessions(rng.next_u64())?;
    let (mut ti, mut tr) = ChannelTransport::pair();
    let mut ri = session_rng(Some(rng.next_u64()), Role::Initiator);
    let mut rr = session_rng(Some(rng.next_u64()), Role::Responder);
    let (a, b) = thread::scope(|s| {
        let peer = s.spawn(move || endpoint(&mut resp, &mut tr, args.stages, &args.ckn, args.peer_priority, &mut rr));
        let a = endpoint(&mut init, &mut ti, args.stages, &args.ckn, args.priority, &mut ri);
        // Unblock the responder if we failed first.
        drop(ti);
        (a, peer.join().expect("responder thread panicked"))
    });
    let (a, b) = (a?, b?);
    print(&a);
    print(&b);
    Ok((a, b))
}

pub fn run_networked(args: &DemoArgs, role: Role, seed: Option<u64>) -> Result<DemoReport> {
    let config = session_config(&args.suite, &args.auth, &args.qkd, role)?;
    let mut session = Session::new(role, config, session_rng(seed, role))?;
    let mut transport = FramedTransport::new(open(&args.net)?);
    let mut rng = session_rng(seed.map(|s| s ^ 0x006d_6b61), role);
    let r = endpoint(&mut session, &mut transport, args.stages, &args.ckn, args.priority, &mut rng)?;
    print(&r);
    Ok(r)
}

pub fn run(args: &DemoArgs, seed: Option<u64>) -> Result<()> {
    match args.net.role()? {
        Some(role) => run_networked(args, role, seed).map(drop),
        None => run_local(args, &mut crate::rng(seed)).map(drop),
    }
}
