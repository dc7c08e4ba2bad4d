use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use deictic::config::{parse_stage_list, ExperimentConfig};
use deictic::experiment::{self, ExperimentError};
use serde::Serialize;

const EXIT_USAGE: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_THRESHOLD: u8 = 3;

#[derive(Parser)]
#[command(name = "deictic", version, about = "Deictic image mapping experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Stage subset, 1-based, e.g. `4,5` or `1-3`.
    #[arg(long)]
    stages: Option<String>,
    /// Environment-step budget for the whole run.
    #[arg(long)]
    budget: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train through the configured stages; writes curve.csv, parameters and summary.json.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// No per-episode progress on stderr.
        #[arg(long)]
        quiet: bool,
    },
    /// Greedy rollouts on the last configured stage.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Run directory or q.params file.
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        /// Exit with status 3 when the success rate is lower.
        #[arg(long)]
        min_success: Option<f64>,
    },
    /// Verify the deictic abstraction on every configured stage.
    Homcheck {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Finite-difference check of backpropagation on random networks.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        count: usize,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        /// Skew the analytic gradient; the check must then fail.
        #[arg(long)]
        corrupt_backward: bool,
    },
    /// Train once per seed, each into its own directory.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Seeds, e.g. `1-5` or `1,4,9`.
        #[arg(long)]
        seeds: String,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
    Threshold,
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(c) => Failure::Usage(c.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<deictic::config::ConfigError> for Failure {
    fn from(e: deictic::config::ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn load(run: &RunArgs) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(&run.config)?;
    if let Some(seed) = run.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &run.out {
        cfg.output_dir = out.clone();
    }
    if let Some(list) = &run.stages {
        cfg.select_stages(&parse_stage_list(list)?)?;
    }
    if let Some(b) = run.budget {
        cfg.curriculum.step_budget = Some(b);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(value: &impl Serialize) {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train { run, quiet } => {
            let cfg = load(&run)?;
            let out = cfg.output_dir.clone();
            let summary = experiment::train(&cfg, &out, |row| {
                if !quiet && row.episode % 100 == 0 {
                    eprintln!(
                        "stage {} episode {} steps {} epsilon {:.3}",
                        row.stage, row.episode, row.steps, row.epsilon
                    );
                }
            })?;
            emit(&summary);
        }
        Command::Eval {
            run,
            params,
            episodes,
            min_success,
        } => {
            if episodes == 0 {
                return Err(Failure::Usage("--episodes must be positive".into()));
            }
            let cfg = load(&run)?;
            let summary = experiment::eval(&cfg, &params, episodes)?;
            emit(&summary);
            if min_success.is_some_and(|m| summary.success_rate < m) {
                return Err(Failure::Threshold);
            }
        }
        Command::Homcheck { run } => {
            let cfg = load(&run)?;
            let results = experiment::homcheck(&cfg)?;
            emit(&results);
            if !results.iter().all(|r| r.certified) {
                return Err(Failure::Threshold);
            }
        }
        Command::Gradcheck {
            seed,
            count,
            step,
            tol,
            corrupt_backward,
        } => {
            if count == 0 || !(step > 0.0) || !(tol > 0.0) {
                return Err(Failure::Usage(
                    "--count, --step and --tol must be positive".into(),
                ));
            }
            let summary = experiment::gradcheck(seed, count, step, tol, corrupt_backward);
            emit(&summary);
            if !summary.passed {
                return Err(Failure::Threshold);
            }
        }
        Command::Sweep { run, seeds } => {
            let cfg = load(&run)?;
            let seeds = experiment::parse_seed_list(&seeds)?;
            let out: &Path = &cfg.output_dir;
            let rows = experiment::sweep(&cfg, &seeds, out)?;
            emit(&rows);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
        Err(Failure::Threshold) => ExitCode::from(EXIT_THRESHOLD),
    }
}
