use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use landau_nls::error::Error;
use landau_nls::experiments::{self, ExperimentConfig, RunReport};
use landau_nls::solvers::Scheme;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_ABORT: u8 = 3;
const EXIT_THRESHOLD: u8 = 4;

/// Simulations of the magnetically confined NLS and its Landau-level
/// averaged limit.
#[derive(Parser)]
#[command(name = "landau-nls", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment configuration.
    #[arg(long, global = true, conflicts_with = "scenario")]
    config: Option<PathBuf>,
    /// Named preset used when no config file is given.
    #[arg(long, global = true)]
    scenario: Option<String>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for random test fields (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Gram deviation, eigen-residuals and round trip of the Landau basis.
    CheckBasis,
    /// One trajectory of the full equation at `params.epsilon`.
    SimulateFull,
    /// One trajectory of the averaged equation.
    SimulateAveraged,
    /// Filtered error against ε with a certified slope fit.
    ConvergenceSweep,
    /// Single-level data under the averaged flow.
    LevelInvariance,
    /// Planar lowest-level equation against the averaged solver.
    LllCompare,
    /// Mass, energy and Σ²′ drift at dt and dt/2.
    ConservationAudit,
}

impl Command {
    fn default_scenario(self) -> &'static str {
        match self {
            Command::LevelInvariance => "level",
            Command::LllCompare => "lll",
            _ => "standard",
        }
    }

    fn run(self, cfg: &ExperimentConfig) -> landau_nls::error::Result<RunReport> {
        match self {
            Command::CheckBasis => experiments::check_basis(cfg),
            Command::SimulateFull => experiments::simulate(cfg, Scheme::Full),
            Command::SimulateAveraged => experiments::simulate(cfg, Scheme::Averaged),
            Command::ConvergenceSweep => experiments::convergence_sweep(cfg),
            Command::LevelInvariance => experiments::level_invariance(cfg),
            Command::LllCompare => experiments::lll_compare(cfg),
            Command::ConservationAudit => experiments::conservation_audit(cfg),
        }
    }
}

fn resolve(cli: &Cli) -> landau_nls::error::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => ExperimentConfig::preset(cli.scenario.as_deref().unwrap_or(cli.command.default_scenario()))?,
    };
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NumericalAbort { .. } => EXIT_ABORT,
        Error::Io(_) | Error::Csv(_) => EXIT_FAILURE,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let cfg = match resolve(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    let report = match cli.command.run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    match report.write(&cfg.output_dir) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    for c in &report.checks {
        println!("{} {}: {:.3e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value);
    }
    if !report.aborts.is_empty() {
        for a in &report.aborts {
            eprintln!("abort: {a}");
        }
        return ExitCode::from(EXIT_ABORT);
    }
    if !report.passed() {
        return ExitCode::from(EXIT_THRESHOLD);
    }
    ExitCode::SUCCESS
}
