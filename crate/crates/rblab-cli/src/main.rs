//! `rblab`: configure, simulate, verify, extract, filter and report on randomized benchmarking runs.

mod commands;
mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::run::RunDir;

/// Environment variable with the default worker-thread count.
const THREADS_ENV: &str = "RBLAB_THREADS";

#[derive(Parser)]
#[command(name = "rblab", version, about = "Randomized benchmarking laboratory")]
struct Cli {
    /// Worker threads (defaults to $RBLAB_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Exit with status 3 when a theorem hypothesis or bound fails.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    sequences: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Parent of the per-run directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Exact run directory; must be new or empty.
    #[arg(long)]
    run_dir: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct PoleArgs {
    /// Pole family such as F1, F2 or lin(0.9); repeatable.
    #[arg(long)]
    family: Vec<String>,
    /// Number of poles; repeatable.
    #[arg(long)]
    n: Vec<usize>,
    /// Last sample index M.
    #[arg(long)]
    m: Option<usize>,
    /// Hankel parameter L.
    #[arg(long)]
    l: Option<usize>,
    /// Shot counts for the noisy study; repeatable.
    #[arg(long = "study-shots")]
    study_shots: Vec<u64>,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo RB data for the configured protocol.
    Simulate(Common),
    /// Check the exponential-decay bounds at every sequence length.
    VerifyDecay(Common),
    /// ESPRIT pole extraction from exact family data or a recorded dataset.
    ExtractPoles {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        poles: PoleArgs,
        /// Use exact synthetic data (the default when no input is given).
        #[arg(long)]
        exact: bool,
        /// Dataset CSV written by `simulate` (sidecar JSON alongside).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        povm: usize,
    },
    /// Filtered RB decay estimates per irrep.
    Filter(Common),
    /// Depolarizing gauge, fidelity decomposition and positivity scans.
    GaugeReport(Common),
    /// Vandermonde conditioning and noisy pole-recovery study.
    ConditioningStudy {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        poles: PoleArgs,
    },
    /// Linear cross-entropy benchmarking under gate-independent noise.
    Xeb(Common),
}

fn load(common: &Common, required: bool) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None if required => return Err(CliError::Schema("--config is required for this command".into())),
        None => ExperimentConfig::parse("")?,
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(s) = common.shots {
        cfg.protocol.shots = s;
    }
    if let Some(s) = common.sequences {
        cfg.protocol.sequences = s;
    }
    if let Some(s) = common.samples {
        cfg.protocol.samples = s;
    }
    if let Some(d) = &common.output_dir {
        cfg.output_dir = d.clone();
    }
    cfg.check()?;
    Ok(cfg)
}

fn apply_poles(cfg: &mut ExperimentConfig, p: &PoleArgs) -> Result<(), CliError> {
    if !p.family.is_empty() {
        cfg.poles.families = p.family.clone();
    }
    if !p.n.is_empty() {
        cfg.poles.n = p.n.clone();
    }
    if let Some(m) = p.m {
        cfg.poles.m = m;
    }
    if p.l.is_some() {
        cfg.poles.l = p.l;
    }
    if !p.study_shots.is_empty() {
        cfg.poles.shots = p.study_shots.clone();
    }
    if let Some(t) = p.trials {
        cfg.poles.trials = t;
    }
    cfg.check()
}

fn init_threads(flag: Option<usize>) -> Result<(), CliError> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(v.parse().map_err(|_| CliError::Schema(format!("{THREADS_ENV}={v} is not a thread count")))?),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Numeric(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(RunDir, String), CliError> {
    init_threads(cli.threads)?;
    let start = |cfg: &ExperimentConfig, name: &str, c: &Common| RunDir::create(cfg, name, c.run_dir.as_deref());
    match cli.command {
        Command::Simulate(c) => {
            let cfg = load(&c, true)?;
            let run = start(&cfg, "simulate", &c)?;
            let s = commands::simulate(&cfg, &run, c.strict)?;
            Ok((run, s))
        }
        Command::VerifyDecay(c) => {
            let cfg = load(&c, true)?;
            let run = start(&cfg, "verify-decay", &c)?;
            let s = commands::verify_decay(&cfg, &run, c.strict)?;
            Ok((run, s))
        }
        Command::ExtractPoles { common, poles, exact, input, povm } => {
            if exact && input.is_some() {
                return Err(CliError::Schema("--exact and --input are mutually exclusive".into()));
            }
            let mut cfg = load(&common, false)?;
            apply_poles(&mut cfg, &poles)?;
            let run = start(&cfg, "extract-poles", &common)?;
            let s = commands::extract_poles(&cfg, &run, input.as_deref(), povm)?;
            Ok((run, s))
        }
        Command::Filter(c) => {
            let cfg = load(&c, true)?;
            let run = start(&cfg, "filter", &c)?;
            let s = commands::filter(&cfg, &run)?;
            Ok((run, s))
        }
        Command::GaugeReport(c) => {
            let cfg = load(&c, true)?;
            let run = start(&cfg, "gauge-report", &c)?;
            let s = commands::gauge_report(&cfg, &run)?;
            Ok((run, s))
        }
        Command::ConditioningStudy { common, poles } => {
            let mut cfg = load(&common, false)?;
            apply_poles(&mut cfg, &poles)?;
            let run = start(&cfg, "conditioning-study", &common)?;
            let s = commands::conditioning_study(&cfg, &run)?;
            Ok((run, s))
        }
        Command::Xeb(c) => {
            let cfg = load(&c, true)?;
            let run = start(&cfg, "xeb", &c)?;
            let s = commands::xeb(&cfg, &run)?;
            Ok((run, s))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok((run, summary)) => {
            println!("{}", run.path.display());
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
