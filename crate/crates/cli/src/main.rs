use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kinetic_cli::{report, run, write_outputs, ExperimentKind, RunConfig};

/// Environment variable overriding the output directory.
const OUTPUT_ENV: &str = "KINETIC_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "kinetic", version, about = "Linearized Boltzmann toolkit: solvers and lemma checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config and the environment).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run a single check instead of the full suite (with `verify`).
    #[arg(long, global = true)]
    lemma: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve the steady problem and report its norms.
    Steady,
    /// Run the transient problem and fit its decay.
    Transient,
    /// Run the lemma checks.
    Verify,
    /// Tabulate an existing `verify.json`.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: &Cli) -> Result<bool, Box<dyn std::error::Error>> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = std::env::var_os(OUTPUT_ENV) {
        cfg.output_dir = dir.into();
    }
    if let Some(dir) = &cli.out {
        cfg.output_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if let Some(id) = &cli.lemma {
        cfg.experiment.lemma = Some(id.clone());
    }
    let kind = match cli.command {
        Command::Steady => ExperimentKind::Steady,
        Command::Transient => ExperimentKind::Transient,
        Command::Verify if cfg.experiment.lemma.is_some() => ExperimentKind::Lemma,
        Command::Verify => ExperimentKind::VerifyAll,
        Command::Report => {
            let (table, ok) = report(&cfg.output_dir)?;
            print!("{table}");
            return Ok(ok);
        }
    };
    cfg.experiment.kind = kind;
    let outcome = run(&cfg, kind)?;
    write_outputs(&outcome, &cfg.output_dir)?;
    print!("{}", outcome.files["summary.txt"]);
    Ok(outcome.success())
}
