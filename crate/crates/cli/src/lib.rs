//! Command-line driver: trains flows per seed and writes effect and strategy
//! reports as CSV and JSON.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

pub(crate) fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "cgnf", version, about = "Causal graphical normalizing flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model per seed and write metrics.json.
    Train(RunArgs),
    /// Average and per-group effects: ace.json and cace.csv.
    Effects(RunArgs),
    /// Evaluate treatment strategies: histogram, advisability, mean outcome and worlds tables.
    Strategies(RunArgs),
    /// Answer a counterfactual query for one dataset row.
    Counterfactual(CounterfactualArgs),
    /// Write a synthetic dataset, its column spec, DAG and oracle effects.
    Synth(SynthArgs),
    /// Compare model, backdoor and true effects.
    Validate(ValidateArgs),
}

/// Config file plus command-line overrides.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub model_dir: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub strategies: Option<Vec<String>>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub max_units: Option<usize>,
}

impl RunArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(s) = &self.seeds {
            config.seeds = s.clone();
        }
        if let Some(p) = &self.data {
            config.data = p.clone();
        }
        if let Some(p) = &self.model_dir {
            config.model_dir = p.clone();
        }
        if let Some(p) = &self.output_dir {
            config.output_dir = p.clone();
        }
        if let Some(e) = self.epsilon {
            config.epsilon = e;
        }
        if let Some(list) = &self.strategies {
            config.strategies =
                list.iter().map(|s| s.parse().map_err(|e| CliError::Validation(format!("{e}")))).collect::<Result<_, _>>()?;
        }
        if let Some(n) = self.max_epochs {
            config.train.max_epochs = n;
        }
        if self.max_units.is_some() {
            config.max_units = self.max_units;
        }
        Ok(config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct CounterfactualArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Zero-based dataset row.
    #[arg(long)]
    pub row: usize,
    #[arg(long)]
    pub treatment: f64,
    /// Seed of the model to query; defaults to the first configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Name of a shipped fixture.
    #[arg(long, conflicts_with = "scm", required_unless_present = "scm")]
    pub fixture: Option<String>,
    /// SCM description file.
    #[arg(long)]
    pub scm: Option<PathBuf>,
    #[arg(long, default_value_t = 20_000)]
    pub rows: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// The SCM that generated the dataset.
    #[arg(long)]
    pub scm: PathBuf,
    /// Allowed distance between model and true effect.
    #[arg(long, default_value_t = 0.1)]
    pub tolerance: f64,
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Train(a) => commands::train(&a.resolve()?).map(|_| ()),
        Command::Effects(a) => commands::effects(&a.resolve()?).map(|_| ()),
        Command::Strategies(a) => commands::strategies(&a.resolve()?).map(|_| ()),
        Command::Counterfactual(a) => {
            let answer = commands::counterfactual(&a.run.resolve()?, a.row, a.treatment, a.seed)?;
            println!("{}", serde_json::to_string_pretty(&answer).map_err(runtime)?);
            Ok(())
        }
        Command::Synth(a) => commands::synth(a).map(|_| ()),
        Command::Validate(a) => {
            let report = commands::validate(&a.run.resolve()?, &a.scm, a.tolerance)?;
            println!("{}", serde_json::to_string_pretty(&report).map_err(runtime)?);
            if report.passed {
                Ok(())
            } else {
                Err(CliError::Runtime("model, backdoor and true effects disagree".into()))
            }
        }
    }
}
