//! Command-line orchestration for the acci pipeline.
//!
//! Commands compose via files only: corpora and pair lists are JSONL,
//! checkpoints and cluster outputs are JSON, curves are CSV + SVG, and every
//! artifact-producing command drops an `*.manifest.json` recording the
//! command line, configuration, seed, and input fingerprints so a run can be
//! reproduced and compared byte for byte.
//!
//! Exit codes: 0 success, 2 validation failure (bad input data or
//! configuration), 3 runtime error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Validation failures exit with code 2; everything else exits 3.
#[derive(Debug)]
pub struct ValidationError(pub String);

impl std::fmt::Display for ValidationError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ValidationError {}

pub fn validation(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ValidationError(msg.into()))
}

#[derive(Parser)]
#[command(name = "acci", version, about = "Cross-document event coreference with causal debiasing")]
pub struct Cli {
    /// Optional TOML config overriding training / inference / generator defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed override for any seeded stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output artifacts and manifests.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Parse, validate, and canonicalize a JSONL corpus.
    Ingest(commands::IngestArgs),
    /// Generate a synthetic confounded train/dev/test corpus.
    GenSynth(commands::GenSynthArgs),
    /// Enumerate candidate mention pairs, optionally heuristic-filtered.
    Pairs(commands::PairsArgs),
    /// Train the pairwise model with the counterfactual bias head.
    Train(commands::TrainArgs),
    /// Score mention pairs with a trained checkpoint.
    Predict(commands::PredictArgs),
    /// Cluster scored pairs into coreference chains.
    Cluster(commands::ClusterArgs),
    /// Score a predicted partition against gold clusters.
    Score(commands::ScoreArgs),
    /// Run the four-mode ablation table on one trained model.
    Ablate(commands::AblateArgs),
    /// Sweep the debiasing coefficient and emit the CoNLL/B3 curve.
    SweepBeta(commands::SweepBetaArgs),
    /// Train twice with the two loss kinds on identical batch order.
    CompareLosses(commands::CompareLossesArgs),
    /// Exact queries against a discrete structural causal model file.
    Scm(commands::ScmArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if err.downcast_ref::<ValidationError>().is_some() {
                eprintln!("validation error: {err}");
                ExitCode::from(2)
            } else {
                eprintln!("error: {err:#}");
                ExitCode::from(3)
            }
        }
    }
}
