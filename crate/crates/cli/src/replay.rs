//! `hakelab-replay`: run an adversary trace and report every answer, every
//! expectation and the cleanness of every accepted stage.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use vmuckle::hakelab::{generate_trace, parse_trace, Replay, Trace, TraceItem, TraceProfile};

#[derive(Args, Debug, Clone)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["file", "generate"]))]
pub struct ReplayArgs {
    /// Trace file to replay.
    pub file: Option<PathBuf>,
    /// Print a random trace for this seed instead of replaying a file.
    #[arg(long)]
    pub generate: Option<u64>,
    /// Omit the query log.
    #[arg(long)]
    pub quiet: bool,
}

const MAX_ANSWER: usize = 96;

fn clip(s: String) -> String {
    if s.chars().count() <= MAX_ANSWER {
        return s;
    }
    let head: String = s.chars().take(MAX_ANSWER).collect();
    format!("{head}…")
}

/// Human-readable replay report.
pub fn report(trace: &Trace, replay: &Replay, quiet: bool) -> String {
    let e = &replay.experiment;
    let mut out = format!("{}\n", trace.config);
    if !quiet {
        out.push_str("\nqueries:\n");
        for (n, entry) in e.log().iter().enumerate() {
            let _ = writeln!(out, "{:4}  {}  ->  {}", n + 1, entry.query, clip(entry.answer.to_string()));
        }
    }
    if !replay.verdicts.is_empty() {
        out.push_str("\nexpectations:\n");
        for v in &replay.verdicts {
            let _ = writeln!(
                out,
                "  {}  {}  (got {})",
                if v.passed() { "ok  " } else { "FAIL" },
                v.expectation,
                if v.actual { "#t" } else { "#f" }
            );
        }
    }
    out.push_str("\ncleanness:\n  session  stage  clean-vm  clean-cvm\n");
    for pi in e.session_ids() {
        for t in 1..=e.config().stages {
            let accepted = e.session(pi).and_then(|s| s.stage_record(t)).is_some_and(|r| r.output.is_some());
            if !accepted {
                continue;
            }
            let _ = writeln!(out, "  {:<7}  {:>5}  {:<8}  {}", pi.to_string(), t, e.clean_vm(pi, t), e.clean_cvm(pi, t));
        }
    }
    out
}

/// Prints the report; fails when any expectation did not hold.
pub fn run(args: &ReplayArgs) -> Result<()> {
    if let Some(seed) = args.generate {
        print!("{}", generate_trace(&TraceProfile::default(), seed));
        return Ok(());
    }
    let path = args.file.as_ref().expect("clap requires file or --generate");
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let trace = parse_trace(&text)?;
    let replay = trace.replay()?;
    print!("{}", report(&trace, &replay, args.quiet));
    let failed = replay.verdicts.iter().filter(|v| !v.passed()).count();
    let checked = trace.items.iter().filter(|i| matches!(i, TraceItem::Expect(_))).count();
    if failed > 0 {
        bail!("{failed} of {checked} expectations failed");
    }
    println!("\n{checked} expectations hold");
    Ok(())
}
