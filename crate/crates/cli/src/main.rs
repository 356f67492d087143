//! `mkws`: few-shot keyword spotting pipeline.
//!
//! extract -> train-embedding -> finetune -> eval-classify and
//! build-stream -> eval-stream, plus gen-synthetic (a bundled corpus
//! generator) and inspect-model. All randomness flows from one seed;
//! identical config and inputs reproduce outputs byte for byte.

mod commands;
mod config;
mod run_log;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "mkws", version, about = "Few-shot keyword spotting toolkit")]
struct Cli {
    /// Experiment config JSON; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the experiment seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic keyword corpus (clips, alignments, noise).
    GenSynthetic(commands::gen_synthetic::Args),
    /// Extract 1-second keyword clips from alignments + source audio.
    Extract(commands::extract::Args),
    /// Train the embedding classifier on an extraction manifest.
    TrainEmbedding(commands::train_embedding::Args),
    /// Fine-tune a 3-class keyword head from five shots.
    Finetune(commands::finetune::Args),
    /// Classification evaluation: ROC curves and F1 at the report threshold.
    EvalClassify(commands::eval_classify::Args),
    /// Build a wakeword or sentence evaluation stream with its timeline.
    BuildStream(commands::build_stream::Args),
    /// Run the streaming detector over a stream and score it.
    EvalStream(commands::eval_stream::Args),
    /// Print a model file's header without loading weights.
    InspectModel(commands::inspect_model::Args),
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    // input/usage problems exit 2, everything else 1
    match err.downcast_ref::<mkws_core::Error>() {
        Some(
            mkws_core::Error::AlignmentParse(_)
            | mkws_core::Error::Dataset(_)
            | mkws_core::Error::Config(_)
            | mkws_core::Error::Eval(_),
        ) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    // default SIGPIPE so `mkws ... | head` ends quietly
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let started = Instant::now();

    let cfg = match ExperimentConfig::resolve(cli.config.as_deref(), cli.seed) {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("mkws: {err:#}");
            return ExitCode::from(2);
        }
    };
    let cfg_json = serde_json::to_string(&cfg).expect("config serializes");
    let mut record = run_log::RunRecord::new(&cfg_json);

    let outcome = match &cli.command {
        Command::GenSynthetic(args) => commands::gen_synthetic::run(args, &cfg, &mut record),
        Command::Extract(args) => commands::extract::run(args, &cfg, &mut record),
        Command::TrainEmbedding(args) => commands::train_embedding::run(args, &cfg, &mut record),
        Command::Finetune(args) => commands::finetune::run(args, &cfg, &mut record),
        Command::EvalClassify(args) => commands::eval_classify::run(args, &cfg, &mut record),
        Command::BuildStream(args) => commands::build_stream::run(args, &cfg, &mut record),
        Command::EvalStream(args) => commands::eval_stream::run(args, &cfg, &mut record),
        Command::InspectModel(args) => commands::inspect_model::run(args, &cfg, &mut record),
    };

    match outcome {
        Ok(log_dir) => {
            record.wall_time_s = started.elapsed().as_secs_f64();
            if let Some(dir) = log_dir {
                if let Err(err) = run_log::append(&dir, &record) {
                    eprintln!("mkws: warning: run log not written: {err:#}");
                }
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("mkws: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
