// Copyright 2026 The rsgrape Authors
// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rsgrape::experiment::{self, CliError, CommandOptions, EXIT_CONFIG, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "rsgrape", version, about = "Risk-sensitive GRAPE for robust gate synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a control schedule.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Infidelity CDF and diversity histogram of a schedule.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Schedule file (default: <out>/schedule.txt).
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Infidelity landscape over the two uncertainty parameters.
    Scan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        schedule: Option<PathBuf>,
    },
    /// Summarize a run directory into report.json.
    Report {
        /// Run directory (same as --out).
        dir: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config and the environment.
    #[arg(long, env = OUT_DIR_ENV)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn options(self) -> CommandOptions {
        CommandOptions {
            config: Some(self.config),
            out: self.out,
            threads: self.threads,
            seed: self.seed,
            ..CommandOptions::default()
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Optimize { common, resume } => {
            let opts = CommandOptions {
                resume,
                ..common.options()
            };
            match experiment::optimize(&opts)? {
                Some(s) => println!(
                    "{} iterations, final j_mean {:e}, j_max {:e}, best j_mean {:e} at iteration {}",
                    s.iterations, s.final_j_mean, s.final_j_max, s.best_j_mean, s.best_iteration
                ),
                None => println!("no iterations run"),
            }
        }
        Command::Evaluate { common, schedule } => {
            let opts = CommandOptions {
                schedule,
                ..common.options()
            };
            let r = experiment::evaluate(&opts)?;
            let s = r.summary;
            println!(
                "n={} mean {:e} q50 {:e} q90 {:e} q99 {:e} max {:e}",
                s.n_samples, s.j_mean, s.q50, s.q90, s.q99, s.q100
            );
        }
        Command::Scan { common, schedule } => {
            let opts = CommandOptions {
                schedule,
                ..common.options()
            };
            let r = experiment::scan(&opts)?;
            println!(
                "{}x{} grid: max {:e} at ({}, {}), min {:e}",
                r.points[0], r.points[1], r.max, r.argmax[0], r.argmax[1], r.min
            );
        }
        Command::Report { dir, out } => {
            let dir = dir
                .or(out)
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .ok_or_else(|| CliError::Config("give the run directory".into()))?;
            let summary = experiment::report(&dir)?;
            println!("{}", serde_json::to_string_pretty(&summary).expect("report serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rsgrape: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
