//! `attnviz`: train, evaluate, render heatmaps, sweep attention placements
//! and verify gradients, all driven by one JSON config.
//!
//! Exit codes: 0 success; 1 gradient check failure or runtime error;
//! 2 configuration, argument or checkpoint error; 3 data error; 4 training
//! diverged.

mod commands;
mod config;
mod failure;
mod render;
mod session;

use std::path::PathBuf;
use std::process::ExitCode;

use attnviz::nn::parse_taps;
use attnviz::Fault;
use clap::{Parser, Subcommand, ValueEnum};

use crate::commands::heatmap::ImageSource;
use crate::config::RunConfig;
use crate::failure::Failure;

#[derive(Parser)]
#[command(
    name = "attnviz",
    version,
    about = "Attention placement and heatmap experiments on CIFAR-10"
)]
struct Cli {
    /// JSON run config; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config's `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Training seed, overriding `train.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network; writes metrics.csv, init.ckpt and model.ckpt.
    Train,
    /// Print test accuracy of a checkpoint.
    Eval {
        /// Defaults to `<out>/model.ckpt`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Render heatmaps of one image into `<out>/heatmap/`.
    Heatmap {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Test-set index; defaults to the first `viz.images` entry.
        #[arg(long, conflicts_with = "image_file")]
        image: Option<usize>,
        /// A 32×32 binary PPM instead of a test image.
        #[arg(long)]
        image_file: Option<PathBuf>,
        /// Comma-separated taps, overriding `viz.taps`.
        #[arg(long, value_delimiter = ',')]
        taps: Option<Vec<String>>,
    },
    /// Train with attention after each stage in turn and compare.
    Stages {
        /// Also list published accuracies next to the measured ones.
        #[arg(long)]
        paper_reference: bool,
    },
    /// Finite-difference check of every differentiable op.
    Gradcheck {
        #[arg(long, default_value_t = attnviz::gradcheck::DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, hide = true, value_enum)]
        inject_fault: Option<FaultArg>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    SigmoidBackward,
}

impl From<FaultArg> for Fault {
    fn from(f: FaultArg) -> Self {
        match f {
            FaultArg::SigmoidBackward => Fault::SigmoidBackward,
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Command::Gradcheck {
        trials,
        inject_fault,
    } = cli.command
    {
        return commands::gradcheck::run(trials, inject_fault.map(Fault::from));
    }
    let cfg = RunConfig::resolve(cli.config.as_deref(), cli.out, cli.seed)?;
    let default_checkpoint = || cfg.out.join(session::CHECKPOINT_FILE);
    match cli.command {
        Command::Train => commands::train::run(&cfg),
        Command::Eval { checkpoint } => {
            commands::eval::run(&cfg, &checkpoint.unwrap_or_else(default_checkpoint))
        }
        Command::Heatmap {
            checkpoint,
            image,
            image_file,
            taps,
        } => {
            let taps: Vec<_> = match taps {
                Some(names) => parse_taps(&names)?.into_iter().collect(),
                None => cfg.viz.taps.clone(),
            };
            let source = match (&image_file, image) {
                (Some(p), _) => ImageSource::File(p),
                (None, Some(i)) => ImageSource::TestIndex(i),
                (None, None) => {
                    ImageSource::TestIndex(cfg.viz.images.first().copied().unwrap_or(0))
                }
            };
            commands::heatmap::run(
                &cfg,
                &checkpoint.unwrap_or_else(default_checkpoint),
                source,
                &taps,
            )
        }
        Command::Stages { paper_reference } => commands::stages::run(&cfg, paper_reference),
        Command::Gradcheck { .. } => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}
