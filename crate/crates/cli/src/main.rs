//! `stswin` — experiments for space-time shifted-window video segmentation
//! with supervised pixel contrast.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Errors caused by how the tool was invoked (bad flags, malformed config,
/// missing initialisation); they exit with status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Parser)]
#[command(name = "stswin", version, about = "Space-time shifted-window video segmentation experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic video dataset.
    Synth {
        /// Experiment config JSON; omitted fields use defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output dataset directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the staged training pipeline (or a subset of stages).
    Train {
        /// Experiment config JSON; omitted fields use defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Dataset directory (from `synth` or compatible).
        #[arg(long)]
        data: PathBuf,
        /// Run directory for logs and checkpoints.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated ascending stage list, e.g. "1,2,3" or "2,3".
        #[arg(long, default_value = "1,2,3")]
        stages: String,
        /// Checkpoint to initialise from (required when not starting at 1).
        #[arg(long)]
        init: Option<PathBuf>,
        /// Sweep stage-2 epoch candidates (comma-separated); each candidate
        /// is scored by stage-3 validation mIoU and the best one is used.
        #[arg(long)]
        stage2_sweep: Option<String>,
    },
    /// Sliding-window inference plus both metric protocols on a checkpoint.
    Eval {
        /// Checkpoint directory (e.g. run/stage3/checkpoint).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Where report.json and report.csv go.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Sweep the clip length or the positive/negative pair configuration.
    Ablate {
        /// "clip-length" or "pairs".
        #[arg(long)]
        axis: String,
        /// Experiment config JSON; omitted fields use defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Directory for per-run artifacts and ablation.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the analytic oracle suite and print one pass/fail line per check.
    Verify {
        /// Skip the slower finite-difference checks.
        #[arg(long)]
        quick: bool,
    },
    /// Render CSV summaries and SVG charts from a run directory.
    Report {
        /// Run directory to scan for logs, eval reports, and ablation CSVs.
        #[arg(long)]
        run: PathBuf,
        /// Where the SVG charts and summary.csv go.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.cmd {
        Cmd::Synth { config, out } => commands::synth::run(config.as_deref(), &out),
        Cmd::Train { config, data, out, stages, init, stage2_sweep } => commands::train::run(
            commands::train::TrainArgs {
                config: config.clone(),
                data,
                out,
                stages,
                init,
                stage2_sweep,
            },
        ),
        Cmd::Eval { checkpoint, data, out, split } => {
            commands::eval::run(&checkpoint, &data, &out, &split)
        }
        Cmd::Ablate { axis, config, data, out } => {
            commands::ablate::run(&axis, config.as_deref(), &data, &out)
        }
        Cmd::Verify { quick } => commands::verify::run(quick),
        Cmd::Report { run, out } => commands::report::run(&run, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<Usage>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
