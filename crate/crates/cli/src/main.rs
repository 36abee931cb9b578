//! `encounter`: simulate worlds, ingest observations, train prior models and
//! run, sweep and summarise update experiments.

mod commands;
mod config;
mod error;
mod manifest;
mod sources;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use toml::Value;

use commands::RunInputs;
use config::Config;
use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(
    name = "encounter",
    version,
    about = "Encounter-rate prior refinement experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Flat `section.key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Top-level seed; overrides `run.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for hotspot episodes; overrides `run.jobs`.
    #[arg(long, global = true)]
    jobs: Option<u64>,
}

#[derive(Args, Debug, Clone)]
struct Inputs {
    /// Dataset directory.
    #[arg(long)]
    data: PathBuf,
    /// Known rates (`hotspot_id,species_id,rate`); defaults to `<data>/truth.csv` if present.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Trained model bundle.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Member predictions (`hotspot_id,species_id,member,mean,variance`).
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Number of update steps T; overrides `run.updates`.
    #[arg(long)]
    updates: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic world with its true rates.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Validate an observation directory and write it in canonical form.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train the feature network and its ensemble members.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
    },
    /// Run update episodes for a set of strategies.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// Comma-separated strategies; overrides `run.strategies`.
        #[arg(long)]
        strategy: Option<String>,
        /// Blending rate in (0, 1], or `none`; overrides `run.lambda`.
        #[arg(long)]
        lambda: Option<String>,
    },
    /// Compare blending schedules for one strategy.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: Inputs,
        /// Strategy to sweep; overrides `sweep.strategy`.
        #[arg(long)]
        strategy: Option<String>,
        /// Comma-separated blending rates; overrides `sweep.lambdas`.
        #[arg(long)]
        lambda: Option<String>,
    },
    /// Merge trajectory files into a summary table.
    Report {
        #[command(flatten)]
        common: Common,
        /// Trajectory files.
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn int(v: u64) -> CliResult<Value> {
    i64::try_from(v)
        .map(Value::Integer)
        .map_err(|_| CliError::Usage(format!("{v} is too large")))
}

fn load_config(common: &Common) -> CliResult<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::defaults(),
    };
    if let Some(seed) = common.seed {
        cfg.set("run.seed", int(seed)?)?;
    }
    if let Some(jobs) = common.jobs {
        if jobs == 0 {
            return Err(CliError::Usage("--jobs must be >= 1".into()));
        }
        cfg.set("run.jobs", int(jobs)?)?;
    }
    Ok(cfg)
}

fn run_inputs(inputs: &Inputs) -> RunInputs<'_> {
    RunInputs {
        data: &inputs.data,
        truth: inputs.truth.as_deref(),
        model: inputs.model.as_deref(),
        predictions: inputs.predictions.as_deref(),
    }
}

fn apply_inputs(cfg: &mut Config, inputs: &Inputs) -> CliResult<()> {
    if let Some(t) = inputs.updates {
        cfg.set("run.updates", int(t)?)?;
    }
    Ok(())
}

fn execute(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate { common } => {
            let cfg = load_config(&common)?;
            commands::simulate(&cfg, common.config.as_deref(), &common.out)
        }
        Command::Ingest { common, data } => {
            let cfg = load_config(&common)?;
            commands::ingest(&cfg, common.config.as_deref(), &data, &common.out)
        }
        Command::Train { common, data } => {
            let cfg = load_config(&common)?;
            commands::train(&cfg, common.config.as_deref(), &data, &common.out)
        }
        Command::Run {
            common,
            inputs,
            strategy,
            lambda,
        } => {
            let mut cfg = load_config(&common)?;
            apply_inputs(&mut cfg, &inputs)?;
            if let Some(s) = strategy {
                commands::parse_strategies(&s)?;
                cfg.set("run.strategies", Value::String(s))?;
            }
            if let Some(l) = lambda {
                cfg.set("run.lambda", Value::String(l))?;
            }
            commands::run(
                &cfg,
                common.config.as_deref(),
                &run_inputs(&inputs),
                &common.out,
            )
        }
        Command::Sweep {
            common,
            inputs,
            strategy,
            lambda,
        } => {
            let mut cfg = load_config(&common)?;
            apply_inputs(&mut cfg, &inputs)?;
            if let Some(s) = strategy {
                cfg.set("sweep.strategy", Value::String(s))?;
            }
            if let Some(l) = lambda {
                cfg.set("sweep.lambdas", Value::String(l))?;
            }
            commands::sweep(
                &cfg,
                common.config.as_deref(),
                &run_inputs(&inputs),
                &common.out,
            )
        }
        Command::Report { common, files } => {
            let cfg = load_config(&common)?;
            commands::report(&cfg, common.config.as_deref(), &files, &common.out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
