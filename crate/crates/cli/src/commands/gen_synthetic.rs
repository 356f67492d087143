use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args as ClapArgs;

use mkws_core::synth::{generate_corpus, SynthConfig};

use crate::config::ExperimentConfig;
use crate::run_log::RunRecord;

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Corpus output directory.
    #[arg(long)]
    pub out: PathBuf,

    /// Number of keywords (overrides config).
    #[arg(long)]
    pub keywords: Option<usize>,

    /// Samples per keyword (overrides config).
    #[arg(long)]
    pub samples: Option<usize>,
}

pub fn run(args: &Args, cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<Option<PathBuf>> {
    let synth = SynthConfig {
        num_keywords: args.keywords.unwrap_or(cfg.synth.num_keywords),
        samples_per_keyword: args.samples.unwrap_or(cfg.synth.samples_per_keyword),
        seed: cfg.seed,
        ..cfg.synth.clone()
    };
    let summary = generate_corpus(&synth, &args.out).context("generating synthetic corpus")?;
    println!(
        "generated {} clips for {} keywords under {}",
        summary.clip_count,
        summary.keywords.len(),
        args.out.display()
    );
    println!("keywords: {}", summary.keywords.join(" "));
    println!("alignments: {}", summary.alignments_path.display());
    println!("noise: {}", summary.noise_dir.display());

    record.add_outputs(&[
        summary.clips_dir.clone(),
        summary.noise_dir.clone(),
        summary.alignments_path.clone(),
    ]);
    Ok(Some(args.out.clone()))
}
