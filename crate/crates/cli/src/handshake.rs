//! `handshake`: run stages in-process, or as one side of a TCP connection.

use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use vmuckle::handshake::{
    drive, run_stage, AuthMethod, FramedTransport, HandshakeOutput, MemoryLink, PairSetup, Role, Session,
};

use crate::describe;
use crate::options::{read_psk, session_config, AuthArgs, NetArgs, QkdArgs, SuiteArgs};

#[derive(Args, Debug, Clone)]
pub struct HandshakeArgs {
    #[command(flatten)]
    pub suite: SuiteArgs,
    #[command(flatten)]
    pub auth: AuthArgs,
    #[command(flatten)]
    pub qkd: QkdArgs,
    #[command(flatten)]
    pub net: NetArgs,
    /// Number of consecutive stages.
    #[arg(long, default_value_t = 1)]
    pub stages: u32,
    /// Report bytes and time per stage.
    #[arg(long)]
    pub bench: bool,
}

/// What one side saw in one stage.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub stage: u32,
    pub output: HandshakeOutput,
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub elapsed: Duration,
}

fn methods(out: &HandshakeOutput) -> String {
    let v: Vec<&str> = out
        .peer_auth
        .iter()
        .map(|m| match m {
            AuthMethod::Psk => "psk",
            AuthMethod::Dss => "cert",
        })
        .collect();
    v.join("+")
}

/// Both parties in this process, with generated long-term keys. `--psk-file`
/// replaces the generated PSK on both sides.
pub fn run_local(args: &HandshakeArgs, rng: &mut ChaCha20Rng) -> Result<Vec<StageReport>> {
    if args.auth.cert_chain.is_some() || args.auth.key.is_some() {
        bail!("in-process runs generate their own certificates; use --listen/--connect with certificate files");
    }
    let suite = args.suite.suite()?;
    let mut setup = PairSetup::generate(suite, args.auth.mode(), rng)?;
    if let Some(p) = &args.auth.psk_file {
        let psk = read_psk(p)?;
        if setup.initiator.psk.is_some() {
            setup.initiator.psk = Some(psk.clone());
            setup.responder.psk = Some(psk);
        }
    }
    setup.qkd = args.qkd.provider()?;
    setup.qkd_stream = args.qkd.qkd_stream.clone();
    setup.qkd_handles = args.qkd.policy();
    let (mut init, mut resp) = setup.sessions(rng.next_u64())?;
    let mut link = MemoryLink::new();
    let mut reports = Vec::new();
    for stage in 1..=args.stages {
        link.reset_counters();
        let t0 = Instant::now();
        let (oi, or) = run_stage(&mut init, &mut resp, &mut link).map_err(|e| anyhow!("stage {stage}: {}", describe(&e)))?;
        let elapsed = t0.elapsed();
        if oi.ms != or.ms {
            bail!("stage {stage}: master secrets differ");
        }
        let report = StageReport {
            stage,
            output: oi,
            bytes_sent: link.bytes_sent(Role::Initiator),
            bytes_received: link.bytes_sent(Role::Responder),
            elapsed,
        };
        println!("stage {stage}: both accepted, MSK {} (peer auth {})", report.output.ms.fingerprint(), methods(&or));
        if args.bench {
            print_bench(&report, "init->resp", "resp->init");
        }
        reports.push(report);
    }
    Ok(reports)
}

fn print_bench(r: &StageReport, sent: &str, received: &str) {
    let total = r.bytes_sent + r.bytes_received;
    println!(
        "  {sent} {} B, {received} {} B, total {} B ({:.2} KB per party, incl. 4-byte framing), {:.2} ms",
        r.bytes_sent,
        r.bytes_received,
        total,
        total as f64 / 2000.0,
        r.elapsed.as_secs_f64() * 1e3
    );
}

/// Binds `addr`, prints `listening on <addr>` and accepts one peer.
pub fn listen(addr: &str) -> Result<TcpStream> {
    let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    let (stream, _) = listener.accept()?;
    Ok(stream)
}

/// Retries for a few seconds so both sides can be started together.
pub fn connect(addr: &str) -> Result<TcpStream> {
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        match TcpStream::connect(addr) {
            Ok(s) => return Ok(s),
            Err(_) if Instant::now() < deadline => thread::sleep(Duration::from_millis(50)),
            Err(e) => return Err(e).with_context(|| format!("connecting to {addr}")),
        }
    }
}

pub fn open(net: &NetArgs) -> Result<TcpStream> {
    let stream = match (&net.listen, &net.connect) {
        (Some(a), _) => listen(a)?,
        (_, Some(a)) => connect(a)?,
        _ => bail!("--listen or --connect is required"),
    };
    stream.set_nodelay(true)?;
    Ok(stream)
}

/// The two sides of one run must not draw the same nonces from a shared seed.
pub fn session_rng(seed: Option<u64>, role: Role) -> ChaCha20Rng {
    match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s.wrapping_mul(2).wrapping_add(role as u64)),
        None => ChaCha20Rng::from_entropy(),
    }
}

/// One side over TCP.
pub fn run_networked(args: &HandshakeArgs, role: Role, seed: Option<u64>) -> Result<Vec<StageReport>> {
    let config = session_config(&args.suite, &args.auth, &args.qkd, role)?;
    let mut session = Session::new(role, config, session_rng(seed, role))?;
    let mut transport = FramedTransport::new(open(&args.net)?);
    let mut reports = Vec::new();
    for stage in 1..=args.stages {
        let (s0, r0) = (transport.bytes_sent(), transport.bytes_received());
        let t0 = Instant::now();
        let output = drive(&mut session, &mut transport).map_err(|e| anyhow!("stage {stage}: {}", describe(&e)))?;
        let report = StageReport {
            stage,
            bytes_sent: transport.bytes_sent() - s0,
            bytes_received: transport.bytes_received() - r0,
            elapsed: t0.elapsed(),
            output,
        };
        println!(
            "stage {stage}: {role} accepted, MSK {} (peer auth {})",
            report.output.ms.fingerprint(),
            methods(&report.output)
        );
        if args.bench {
            print_bench(&report, "sent", "received");
        }
        reports.push(report);
    }
    Ok(reports)
}

pub fn run(args: &HandshakeArgs, seed: Option<u64>) -> Result<Vec<StageReport>> {
    match args.net.role()? {
        Some(role) => run_networked(args, role, seed),
        None => run_local(args, &mut crate::rng(seed)),
    }
}
