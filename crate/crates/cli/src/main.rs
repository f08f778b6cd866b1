//! `metaseg`: synthetic data, meta-training, transfer evaluation and export
//! for few-shot point-cloud segmentation.
//!
//! Exit codes: 0 success, 1 failed check, 2 usage or configuration,
//! 3 divergence, 4 data capacity, 5 I/O.

mod commands;
mod error;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use metaseg_core::config::RunConfig;
use metaseg_core::tensor::Precision;

use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "metaseg", version, about = "Few-shot meta-learning for point-cloud segmentation")]
struct Cli {
    #[command(flatten)]
    globals: Globals,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Globals {
    /// Master seed; overrides the config file's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl Globals {
    pub fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("this command needs --out".into()))
    }

    pub fn seed_or(&self, fallback: u64) -> u64 {
        self.seed.unwrap_or(fallback)
    }

    /// The config file, if given, with `--seed` applied.
    pub fn run_config(&self) -> Result<Option<RunConfig>> {
        let Some(path) = &self.config else {
            return Ok(None);
        };
        let mut cfg = RunConfig::load(path)?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(Some(cfg))
    }

    pub fn require_config(&self) -> Result<RunConfig> {
        self.run_config()?
            .ok_or_else(|| CliError::Usage("this command needs --config".into()))
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic multi-area dataset.
    Synth(commands::SynthArgs),
    /// Load a dataset and report its rooms, blocks and categories.
    Ingest(commands::IngestArgs),
    /// Meta-train from the run configuration.
    Pretrain,
    /// Adapt a checkpoint to sampled target episodes and score the queries.
    AdaptEval(commands::AdaptEvalArgs),
    /// Adapt-eval over every (pretrain area, test area) pair.
    CrossValidate(commands::CrossValidateArgs),
    /// Write predicted and ground-truth PLY files for each block of a room.
    ExportPly(commands::ExportPlyArgs),
    /// Check the network's gradients against finite differences.
    Gradcheck(commands::GradcheckArgs),
}

pub fn parse_precision(s: &str) -> std::result::Result<Precision, String> {
    s.parse()
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.globals;
    match cli.command {
        Command::Synth(a) => commands::synth(g, a),
        Command::Ingest(a) => commands::ingest(g, a),
        Command::Pretrain => commands::pretrain(g),
        Command::AdaptEval(a) => commands::adapt_eval(g, a),
        Command::CrossValidate(a) => commands::cross_validate(g, a),
        Command::ExportPly(a) => commands::export_ply(g, a),
        Command::Gradcheck(a) => commands::gradcheck(g, a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
