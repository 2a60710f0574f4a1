//! Command-line harness: config resolution, experiment dispatch and file output.

pub mod commands;
pub mod config;
mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("statistical check failed: {0}")]
    Statistical(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Statistical(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "evoibm",
    version,
    about = "Birth-death-mutation-competition simulations and their limits"
)]
pub struct Cli {
    /// TOML experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for replicate ensembles.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Figure preset, `fig1a` to `fig2d`.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    /// Use the reduced desk-scale size and horizon of the preset.
    #[arg(long, global = true)]
    pub desk: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Limit {
    Ide,
    Pde,
    OdeMono,
    OdeDi,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate the individual-based process and write heatmap and mass tracks.
    Simulate,
    /// Solve a deterministic limit.
    Limits {
        #[arg(value_enum)]
        which: Limit,
    },
    /// Simulate the trait substitution sequence.
    Tss {
        #[arg(long)]
        x0: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Estimate the fixation probability of a single mutant.
    Invade {
        #[arg(long)]
        x: Option<f64>,
        #[arg(long)]
        y: Option<f64>,
        #[arg(long = "K")]
        k: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Micro-simulation ensembles across system sizes, optionally against the IDE.
    Compare {
        #[arg(long)]
        ide: bool,
    },
    /// Martingale residual and bracket of the total mass or another test function.
    Martingale,
    /// Check the model against its envelope assumptions.
    Validate,
}

/// Resolves the config and runs the command.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => config::load(p)?,
        None => config::Config::default(),
    };
    if cli.desk {
        cfg.run.desk = Some(true);
    }
    let preset = cli.preset.clone().or_else(|| cfg.model.preset.clone());
    let preset = match preset {
        Some(name) => Some(cfg.apply_preset(&name)?),
        None => None,
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = Some(s);
    }
    if let Some(w) = cli.workers {
        cfg.run.workers = Some(w);
    }
    let ctx = commands::Context {
        cfg,
        preset,
        out: cli.out.clone(),
    };
    match &cli.command {
        Command::Simulate => commands::simulate(&ctx),
        Command::Limits { which } => commands::limits(&ctx, *which),
        Command::Tss { x0, t_end } => commands::tss(&ctx, *x0, *t_end),
        Command::Invade {
            x,
            y,
            k,
            replicates,
        } => commands::invade(&ctx, *x, *y, *k, *replicates),
        Command::Compare { ide } => commands::compare(&ctx, *ide),
        Command::Martingale => commands::martingale(&ctx),
        Command::Validate => commands::validate(&ctx),
    }
}
