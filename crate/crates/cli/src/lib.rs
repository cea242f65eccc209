//! Batch pipeline around `seqcoupon`: simulate a trial, train the predictor
//! pair, allocate coupons, evaluate logs and compare strategies.

pub mod commands;
pub mod config;
pub mod exit;
pub mod manifest;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::Reporter;
use crate::config::RunConfig;
use crate::exit::CliResult;

#[derive(Debug, Parser)]
#[command(
    name = "seqcoupon",
    version,
    about = "Sequential two-round coupon allocation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `simulator.rng_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Suppress progress messages.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a catalog and a randomized two-round trial.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit both rounds' predictors on trial files.
    Train {
        #[command(flatten)]
        common: Common,
        /// Directory holding the catalog and trial logs.
        #[arg(long)]
        data: PathBuf,
    },
    /// Plan round-1 and round-2 coupons for unsold items.
    Allocate {
        #[command(flatten)]
        common: Common,
        /// Predictor pair directory written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        /// Outcome logs of earlier rounds; sold items are skipped.
        #[arg(long = "logs", num_args = 1..)]
        logs: Vec<PathBuf>,
    },
    /// Delay tables and the cumulative uplift curve for a trial.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Predictor pair used to score items for the uplift curve.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train, then roll out random, independent and sequential strategies.
    Compare {
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common }
            | Command::Train { common, .. }
            | Command::Allocate { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Compare { common } => common,
        }
    }
}

pub fn load_config(common: &Common) -> CliResult<RunConfig> {
    let cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    Ok(cfg.with_seed(common.seed))
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let common = cli.command.common();
    let cfg = load_config(common)?;
    let rep = Reporter {
        quiet: common.quiet,
    };
    let out = &common.out;
    match &cli.command {
        Command::Simulate { .. } => commands::simulate(&cfg, out, rep),
        Command::Train { data, .. } => commands::train(&cfg, data, out, rep),
        Command::Allocate {
            model,
            catalog,
            logs,
            ..
        } => commands::allocate(&cfg, model, catalog, logs, out, rep),
        Command::Evaluate { data, model, .. } => {
            commands::evaluate(&cfg, data, model.as_deref(), out, rep)
        }
        Command::Compare { .. } => commands::compare(&cfg, out, rep),
    }
}
