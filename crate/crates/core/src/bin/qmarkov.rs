//! Command-line front end: config ingestion, dispatch, machine-readable
//! output. Exit codes: 0 ok, 2 config error, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qmarkov::cli;
use qmarkov::config::RunConfig;
use qmarkov::error::Error;

#[derive(Parser)]
#[command(
    name = "qmarkov",
    version,
    about = "Markovian generators and exact oracles for open quantum systems"
)]
struct Cli {
    /// Path to the TOML run configuration.
    #[arg(long, global = true, default_value = "run.toml")]
    config: PathBuf,

    /// Output directory for CSV/JSON artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Seed for randomized test states (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for the parallel kernels.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the weak-coupling generator; write generator.json, cpt_report.csv.
    Generator,
    /// Bohr sectors, level shifts and resonance energies; write resonances.csv.
    Resonances,
    /// Propagate an initial state under the configured generator; write trajectory.csv.
    Propagate,
    /// Bare/interacting equilibrium states and renormalized data; write equilibrium.json.
    Equilibrium,
    /// Trace distances of every approximant against the exact finite-mode
    /// oracle; write comparison.csv, scaling.json.
    CompareOracle,
    /// Run the invariant suite and print a pass/fail table.
    Validate,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(threads) = cli.threads {
        let threads = threads.max(1);
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
        faer::set_global_parallelism(if threads == 1 {
            faer::Par::Seq
        } else {
            faer::Par::rayon(threads)
        });
    }

    let mut cfg = match RunConfig::load(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    for w in cfg.bath.quality_warnings() {
        eprintln!("warning: {w}");
    }

    let result = match cli.command {
        Command::Generator => cli::cmd_generator(&cfg, &cli.out),
        Command::Resonances => cli::cmd_resonances(&cfg, &cli.out),
        Command::Propagate => cli::cmd_propagate(&cfg, &cli.out),
        Command::Equilibrium => cli::cmd_equilibrium(&cfg, &cli.out),
        Command::CompareOracle => cli::cmd_compare_oracle(&cfg, &cli.out),
        Command::Validate => match cli::cmd_validate(&cfg, &cli.out) {
            Ok((lines, all_pass)) => {
                for line in lines {
                    println!("{line}");
                }
                return if all_pass {
                    ExitCode::SUCCESS
                } else {
                    eprintln!("error: invariant suite failed");
                    ExitCode::from(3)
                };
            }
            Err(e) => Err(e),
        },
    };

    match result {
        Ok(lines) => {
            for line in lines {
                println!("{line}");
            }
            ExitCode::SUCCESS
        }
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
