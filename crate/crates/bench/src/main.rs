//! `rmq-bench`: generate workloads, build minima hierarchies, run and verify
//! query batches, and sweep or benchmark configurations.
//!
//! Exit codes: 0 success, 1 verification mismatch, 2 usage error, 3 I/O or format error.

mod commands;
mod error;
mod settings;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{BenchArgs, BuildArgs, GenArgs, QueryArgs, SweepArgs, VerifyArgs};
use crate::error::{CliError, CliResult};
use crate::settings::Knobs;

#[derive(Debug, Parser)]
#[command(
    name = "rmq-bench",
    version,
    about = "Batch range-minimum queries over a hierarchy of chunk minima"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded array, query batch and workload sidecar.
    Gen(GenArgs),
    /// Build a hierarchy from an array file.
    Build(BuildArgs),
    /// Answer a query file; writes results CSV and batch statistics.
    Query(QueryArgs),
    /// Cross-check every query against a full scan; exits 1 on any mismatch.
    Verify(VerifyArgs),
    /// Run every (n, c, g, strategy) grid point on one batch per n.
    Sweep(SweepArgs),
    /// Time a batch under each scheduling strategy and append CSV rows.
    Bench(BenchArgs),
}

impl Command {
    fn knobs(&self) -> &Knobs {
        match self {
            Command::Gen(a) => &a.knobs,
            Command::Build(a) => &a.knobs,
            Command::Query(a) => &a.knobs,
            Command::Verify(a) => &a.knobs,
            Command::Sweep(a) => &a.knobs,
            Command::Bench(a) => &a.knobs,
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    let settings = command.knobs().clone().resolve()?;
    let dispatch = || match &command {
        Command::Gen(a) => commands::gen(a, &settings),
        Command::Build(a) => commands::build(a, &settings),
        Command::Query(a) => commands::query(a, &settings),
        Command::Verify(a) => commands::verify(a, &settings),
        Command::Sweep(a) => commands::sweep(a, &settings),
        Command::Bench(a) => commands::bench(a, &settings),
    };
    match settings.workers {
        None => dispatch(),
        Some(0) => Err(CliError::usage("--workers must be at least 1")),
        Some(workers) => rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| CliError::usage(format!("cannot start {workers} workers: {e}")))?
            .install(dispatch),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("rmq-bench: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
