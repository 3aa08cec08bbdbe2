//! `spectool`: mine pattern pools, score predictions, validate policies and
//! run baseline/speculative simulations.
//!
//! Exit codes: 0 success, 1 usage or I/O error, 2 invariant violation.

mod commands;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "spectool", version, about = "Speculative tool-call execution toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MatchArg {
    Embedded,
    Contiguous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Baseline,
    Spec,
    Shadow,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MotifArg {
    EditVerify,
    LocateExamine,
    SearchVisit,
    BatchFetch,
    Mix,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine a pattern pool from a JSONL trace.
    Mine {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        sigma: usize,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, value_enum, default_value_t = MatchArg::Embedded)]
        match_mode: MatchArg,
        /// Session inactivity threshold in seconds.
        #[arg(long, default_value_t = 300)]
        gap_s: u64,
        /// Also write the mining summary here.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Score next-call predictions of a pool on a held-out trace.
    Score {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Restrict the hit rate to predictions this policy admits.
        #[arg(long)]
        policy: Option<PathBuf>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long, default_value_t = 300)]
        gap_s: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a workload in baseline and/or speculative mode.
    Simulate {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long)]
        arrivals: PathBuf,
        /// Pattern pool; speculation is inert without one.
        #[arg(long)]
        pool: Option<PathBuf>,
        /// Speculation policy; defaults to allowing everything with
        /// side-effecting tools capped at dry runs.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Total resource units and speculative budget, `R,B`.
        #[arg(long, default_value = "8,4")]
        resources: String,
        #[arg(long, default_value_t = 1000)]
        epoch_ms: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
        /// Speculative submissions per prediction round; unbounded by default.
        #[arg(long)]
        max_candidates: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Validate a policy file and print the effective policy.
    CheckPolicy {
        #[arg(long)]
        policy: PathBuf,
    },
    /// Write a synthetic JSONL trace with planted motifs.
    GenCorpus {
        #[arg(long, value_enum, default_value_t = MotifArg::Mix)]
        motif: MotifArg,
        #[arg(long, default_value_t = 500)]
        sessions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a Poisson arrival trace over a workload's scripts.
    GenArrivals {
        #[arg(long)]
        workload: PathBuf,
        #[arg(long, default_value_t = 50)]
        requests: usize,
        #[arg(long, default_value_t = 1000.0)]
        mean_gap_ms: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(commands::Failure::Invariant(msg)) => {
            eprintln!("invariant violation: {msg}");
            ExitCode::from(2)
        }
    }
}
