//! Handshake cost per suite: bytes on the wire, wall time and CPU cycles.
//!
//! Bytes are application-layer bytes as seen by the transport, including the
//! 4-byte length prefix of every message. 1 KB = 1000 bytes. Per-party figures
//! are half the total of both directions.

use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;
use serde::Serialize;
use vmuckle::handshake::{run_stage, AuthMode, MemoryLink, PairSetup, Role};
use vmuckle::suite::CipherSuite;

use crate::describe;
use crate::options::AuthKind;

pub const DEFAULT_KEMS: [&str; 3] = ["ML-KEM-512", "ML-KEM-768", "ML-KEM-1024"];
pub const DEFAULT_SIGS: [&str; 9] = [
    "PSK",
    "ML-DSA-44",
    "ML-DSA-65",
    "ML-DSA-87",
    "SLH-DSA-SHAKE-128f",
    "SLH-DSA-SHAKE-192f",
    "SLH-DSA-SHAKE-256f",
    "Falcon-512",
    "Falcon-1024",
];

/// Row label that selects PSK-only authentication.
pub const PSK_ROW: &str = "PSK";

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_KEMS.map(String::from))]
    pub kems: Vec<String>,
    /// Signature schemes; `PSK` is the PSK-only row.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SIGS.map(String::from))]
    pub sigs: Vec<String>,
    #[arg(long, default_value = "ECDH-P521")]
    pub kem_c: String,
    /// Authentication for the signature rows.
    #[arg(long, value_enum, default_value = "cert")]
    pub auth: AuthKind,
    /// Timed handshakes per cell; the median is reported.
    #[arg(long, default_value_t = 3)]
    pub reps: usize,
    /// Cells measured concurrently.
    #[arg(long, default_value_t = 1)]
    pub parallel: usize,
    /// Write all records as CSV to this path (`-` for stdout).
    #[arg(long)]
    pub csv: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRecord {
    pub kem_pq: String,
    pub kem_c: String,
    pub signature: String,
    pub auth: String,
    pub bytes_init: u64,
    pub bytes_resp: u64,
    pub total_bytes: u64,
    pub per_party_kb: f64,
    pub total_kb: f64,
    pub wall_ms: f64,
    pub cycles: u64,
    /// `rdtsc`, or `wall-ns` where no cycle counter is available.
    pub cycle_source: &'static str,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cell {
    pub kem_pq: String,
    pub kem_c: String,
    pub signature: String,
    pub mode: AuthMode,
}

impl Cell {
    /// The PSK row runs PSK-only; every other row uses `auth`.
    pub fn new(kem_pq: &str, kem_c: &str, signature: &str, auth: AuthKind) -> Self {
        let mode = if signature == PSK_ROW { AuthMode::PskOnly } else { auth.into() };
        Cell { kem_pq: kem_pq.into(), kem_c: kem_c.into(), signature: signature.into(), mode }
    }
}

fn mode_name(m: AuthMode) -> &'static str {
    match m {
        AuthMode::PskOnly => "psk",
        AuthMode::DssOnly => "cert",
        AuthMode::Both => "both",
    }
}

#[cfg(target_arch = "x86_64")]
fn cycle_counter() -> (u64, &'static str) {
    // SAFETY: rdtsc has no preconditions on x86_64.
    (unsafe { core::arch::x86_64::_rdtsc() }, "rdtsc")
}

#[cfg(not(target_arch = "x86_64"))]
fn cycle_counter() -> (u64, &'static str) {
    use std::sync::OnceLock;
    static EPOCH: OnceLock<Instant> = OnceLock::new();
    (EPOCH.get_or_init(Instant::now).elapsed().as_nanos() as u64, "wall-ns")
}

fn median<T: PartialOrd + Copy>(mut v: Vec<T>) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
    v[v.len() / 2]
}

/// Key generation happens outside the timed region; each repetition is a
/// fresh session pair running stage 1.
pub fn bench_cell(cell: &Cell, reps: usize, seed: u64) -> BenchRecord {
    let mut rec = BenchRecord {
        kem_pq: cell.kem_pq.clone(),
        kem_c: cell.kem_c.clone(),
        signature: cell.signature.clone(),
        auth: mode_name(cell.mode).into(),
        bytes_init: 0,
        bytes_resp: 0,
        total_bytes: 0,
        per_party_kb: 0.0,
        total_kb: 0.0,
        wall_ms: 0.0,
        cycles: 0,
        cycle_source: cycle_counter().1,
        error: String::new(),
    };
    if let Err(e) = measure(cell, reps.max(1), seed, &mut rec) {
        rec.error = format!("{e:#}");
    }
    rec
}

fn measure(cell: &Cell, reps: usize, seed: u64, rec: &mut BenchRecord) -> Result<()> {
    let sig = if cell.signature == PSK_ROW { "none" } else { &cell.signature };
    let suite = CipherSuite::new(&cell.kem_c, &cell.kem_pq, sig)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let setup = PairSetup::generate(suite, cell.mode, &mut rng)?;
    let (mut walls, mut cycles) = (Vec::new(), Vec::new());
    for rep in 0..reps {
        let (mut i, mut r) = setup.sessions(seed.wrapping_add(rep as u64))?;
        let mut link = MemoryLink::new();
        let (c0, _) = cycle_counter();
        let t0 = Instant::now();
        let out = run_stage(&mut i, &mut r, &mut link);
        let wall = t0.elapsed();
        let (c1, _) = cycle_counter();
        let (oi, or) = out.map_err(|e| anyhow::anyhow!(describe(&e)))?;
        anyhow::ensure!(oi.ms == or.ms, "master secrets differ");
        walls.push(wall.as_secs_f64() * 1e3);
        cycles.push(c1.wrapping_sub(c0));
        rec.bytes_init = link.bytes_sent(Role::Initiator);
        rec.bytes_resp = link.bytes_sent(Role::Responder);
    }
    rec.total_bytes = rec.bytes_init + rec.bytes_resp;
    rec.total_kb = rec.total_bytes as f64 / 1000.0;
    rec.per_party_kb = rec.total_kb / 2.0;
    rec.wall_ms = median(walls);
    rec.cycles = median(cycles);
    Ok(())
}

/// Every KEM × signature cell, KEM-major. A failing cell is recorded and
/// the rest still run.
pub fn bench_matrix(args: &BenchArgs, seed: u64) -> Vec<BenchRecord> {
    let cells: Vec<Cell> = args
        .kems
        .iter()
        .flat_map(|k| args.sigs.iter().map(move |s| Cell::new(k, &args.kem_c, s, args.auth)))
        .collect();
    let results = Mutex::new(vec![None; cells.len()]);
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..args.parallel.clamp(1, cells.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = cells.get(i) else { break };
                let rec = bench_cell(cell, args.reps, seed.wrapping_add(i as u64 * 1000));
                results.lock().expect("no panics while locked")[i] = Some(rec);
            });
        }
    });
    results.into_inner().expect("workers finished").into_iter().map(|r| r.expect("every cell ran")).collect()
}

/// Per-party KB grid: one row per signature, one column per KEM.
pub fn markdown(records: &[BenchRecord], kems: &[String], sigs: &[String]) -> String {
    let mut out = String::from(
        "Per-party handshake size in KB (application-layer bytes incl. 4-byte framing, 1 KB = 1000 B)\n\n",
    );
    out.push_str(&format!("| auth | {} |\n", kems.join(" | ")));
    out.push_str(&format!("|---|{}\n", "---:|".repeat(kems.len())));
    for s in sigs {
        let cells: Vec<String> = kems
            .iter()
            .map(|k| match records.iter().find(|r| &r.kem_pq == k && &r.signature == s) {
                Some(r) if r.error.is_empty() => format!("{:.1}", r.per_party_kb),
                Some(_) => "error".into(),
                None => "-".into(),
            })
            .collect();
        out.push_str(&format!("| {s} | {} |\n", cells.join(" | ")));
    }
    out.push_str("\n| KEM | auth | bytes init | bytes resp | total KB | median ms | median cycles |\n");
    out.push_str("|---|---|---:|---:|---:|---:|---:|\n");
    for r in records {
        if r.error.is_empty() {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {:.1} | {:.2} | {}{} |\n",
                r.kem_pq,
                r.signature,
                r.bytes_init,
                r.bytes_resp,
                r.total_kb,
                r.wall_ms,
                r.cycles,
                if r.cycle_source == "rdtsc" { "" } else { " (ns)" }
            ));
        } else {
            out.push_str(&format!("| {} | {} | error: {} | | | | |\n", r.kem_pq, r.signature, r.error));
        }
    }
    out
}

pub fn write_csv(records: &[BenchRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: &BenchArgs, seed: u64) -> Result<()> {
    let records = bench_matrix(args, seed);
    print!("{}", markdown(&records, &args.kems, &args.sigs));
    match args.csv.as_deref() {
        Some("-") => write_csv(&records, std::io::stdout())?,
        Some(path) => {
            let f = std::fs::File::create(path).with_context(|| format!("creating {path}"))?;
            write_csv(&records, f)?;
        }
        None => {}
    }
    let failed = records.iter().filter(|r| !r.error.is_empty()).count();
    if failed > 0 {
        eprintln!("{failed} cell(s) failed");
    }
    Ok(())
}
