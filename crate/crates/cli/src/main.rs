use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use cpt_sca_cli::config::Config;
use cpt_sca_cli::{batch, exit, exit_code, solve, trace, verify, Outcome};

/// Power allocation for prospect-theoretic agents by successive convex approximation.
#[derive(Parser)]
#[command(name = "cptsca", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and write the solution and iteration trace.
    Solve(Common),
    /// Compare SCA with the baseline over seeded instances.
    Batch(Common),
    /// Write an SCA trajectory and an objective grid for a 3-agent instance.
    TraceContour(Common),
    /// Check the surrogate construction rules on sampled instances.
    VerifySurrogates(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for `batch` and `verify-surrogates` (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn run(cli: Cli) -> Result<Outcome> {
    let (Command::Solve(common) | Command::Batch(common) | Command::TraceContour(common) | Command::VerifySurrogates(common)) =
        &cli.command;
    let mut loaded = Config::load(&common.config)?;
    if let Some(seed) = common.seed {
        loaded.config.override_seed(seed);
    }
    match &cli.command {
        Command::Solve(c) => solve::run(&loaded, &c.out),
        Command::Batch(c) => batch::run(&loaded, &c.out, c.workers),
        Command::TraceContour(c) => trace::run(&loaded, &c.out),
        Command::VerifySurrogates(c) => verify::run(&loaded, &c.out, c.workers),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::SUCCESS });
        }
    };
    let result = run(cli);
    if let Err(e) = &result {
        eprintln!("error: {e:#}");
    }
    ExitCode::from(exit_code(&result))
}
