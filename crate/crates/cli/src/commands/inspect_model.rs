use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args as ClapArgs;

use mkws_core::model::{read_header, ContainerHeader};

use crate::config::ExperimentConfig;
use crate::run_log::RunRecord;

#[derive(Debug, ClapArgs)]
pub struct Args {
    #[arg(long)]
    pub model: PathBuf,

    /// Emit the raw header JSON instead of the summary.
    #[arg(long)]
    pub json: bool,
}

pub fn run(args: &Args, _cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<Option<PathBuf>> {
    record.add_input(&args.model);
    let header = read_header(&args.model).context("reading model header")?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&header)?);
        return Ok(None);
    }
    match &header {
        ContainerHeader::Embedding(h) => {
            println!("kind: embedding model");
            println!(
                "classes: {} ({} keywords + background)",
                h.classes.len(),
                h.classes.len().saturating_sub(1)
            );
            println!(
                "trunk: {} conv stages; dense {:?}; embedding {} units",
                h.spec.trunk.len(),
                h.spec.dense_units,
                h.spec.embedding_units
            );
            println!("input: {}x{}", h.spec.input_frames, h.spec.input_bins);
            println!("parameters: {}", h.spec.param_count());
            println!(
                "frontend: {} mel bins, {:.0}/{:.0} ms window/hop",
                h.frontend.num_mel_bins, h.frontend.window_ms, h.frontend.hop_ms
            );
            if !h.fingerprint.config_hash.is_empty() {
                println!("config hash: {}", h.fingerprint.config_hash);
                println!("data hash:   {}", h.fingerprint.data_hash);
            }
        }
        ContainerHeader::FewshotHead(h) => {
            println!("kind: few-shot head");
            println!("target word: {}", h.target_word);
            println!("language: {}", h.language);
            println!("classes: {}", h.class_order.join(", "));
            println!("embedding units: {}", h.embedding_units);
            println!("embedding fingerprint: {}", h.embedding_fingerprint);
            for (i, shot) in h.shot_paths.iter().enumerate() {
                println!("shot {i}: {shot}");
            }
        }
    }
    Ok(None)
}
