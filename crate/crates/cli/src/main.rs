use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use rand_core::RngCore;
use vmuckle_cli::bench::BenchArgs;
use vmuckle_cli::demo::DemoArgs;
use vmuckle_cli::handshake::HandshakeArgs;
use vmuckle_cli::kat::KatVector;
use vmuckle_cli::pki::PkiCommand;
use vmuckle_cli::replay::ReplayArgs;
use vmuckle_cli::{bench, demo, handshake, pki, replay, rng, SEED_ENV};

/// Hybrid post-quantum, QKD and classical authenticated key exchange.
#[derive(Parser, Debug)]
#[command(name = "vmuckle", version)]
struct Cli {
    /// Seed for every random choice, for reproducible runs.
    #[arg(long, global = true, env = SEED_ENV)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run handshake stages in-process or over TCP.
    Handshake(HandshakeArgs),
    /// Measure handshake size and time for a grid of suites.
    Bench(BenchArgs),
    /// Handshake, then MACsec key agreement on top of its master secret.
    DemoMacsec(DemoArgs),
    /// Create and inspect hybrid certificates.
    #[command(subcommand)]
    Pki(PkiCommand),
    /// Print or check key-schedule known-answer vectors.
    ScheduleKat(KatArgs),
    /// Replay an adversary trace against the security experiment.
    HakelabReplay(ReplayArgs),
}

#[derive(Args, Debug)]
struct KatArgs {
    /// Recompute from the inputs of this vector file.
    #[arg(long)]
    inputs: Option<std::path::PathBuf>,
    /// Compare against the derivation lines in --inputs and fail on a difference.
    #[arg(long, requires = "inputs")]
    check: bool,
    /// Leave out the classical shared secret and key share.
    #[arg(long)]
    no_classical: bool,
    #[arg(long, default_value = "random")]
    name: String,
}

fn schedule_kat(args: KatArgs, seed: Option<u64>) -> Result<()> {
    let mut v = match &args.inputs {
        Some(p) => KatVector::parse(&std::fs::read_to_string(p)?)?,
        None => KatVector::random(&args.name, !args.no_classical, &mut rng(seed)),
    };
    if args.check {
        let bad = v.mismatches()?;
        for (want, got) in &bad {
            println!("expected {want}\ncomputed {got}");
        }
        anyhow::ensure!(bad.is_empty(), "{} of {} lines differ", bad.len(), v.lines.len());
        println!("{} lines match", v.lines.len());
        return Ok(());
    }
    v.lines = v.compute()?;
    print!("{}", v.render());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Handshake(a) => handshake::run(&a, seed).map(drop),
        Command::Bench(a) => bench::run(&a, seed.unwrap_or_else(|| rng(None).next_u64())),
        Command::DemoMacsec(a) => demo::run(&a, seed),
        Command::Pki(c) => pki::run(c, &mut rng(seed)),
        Command::ScheduleKat(a) => schedule_kat(a, seed),
        Command::HakelabReplay(a) => replay::run(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
