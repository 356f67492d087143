use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args as ClapArgs;

use mkws_core::dataset::DatasetManifest;
use mkws_core::model::{
    build_model, class_list, load_noise_dir, train_embedding, PaddingVariant, TrainingConfig,
};
use mkws_core::Error as CoreError;

use crate::config::ExperimentConfig;
use crate::run_log::RunRecord;

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Extraction manifest (JSON lines).
    #[arg(long)]
    pub manifest: PathBuf,

    /// Root directory the manifest's clip paths are relative to.
    #[arg(long)]
    pub clips_root: Option<PathBuf>,

    #[arg(long)]
    pub noise_dir: Option<PathBuf>,

    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,

    /// Words to leave out of the embedding vocabulary (comma separated),
    /// e.g. held-out few-shot targets.
    #[arg(long, value_delimiter = ',')]
    pub exclude_words: Vec<String>,

    #[arg(long)]
    pub epochs: Option<usize>,

    /// silence-only or silence-and-context training variant.
    #[arg(long)]
    pub padding_variant: Option<String>,
}

pub fn run(args: &Args, cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<Option<PathBuf>> {
    let clips_root = super::resolve_path(args.clips_root.as_deref(), cfg.data_root(), cfg, "clips-root")?;
    let noise_dir = super::noise_dir(args.noise_dir.as_deref(), cfg)?;
    record.add_input(&args.manifest);

    let full_manifest = DatasetManifest::load(&args.manifest).context("loading manifest")?;
    let manifest = DatasetManifest {
        entries: full_manifest
            .entries
            .into_iter()
            .filter(|e| !args.exclude_words.contains(&e.word))
            .collect(),
    };
    if manifest.entries.is_empty() {
        bail!(CoreError::Dataset("manifest is empty after exclusions".into()));
    }

    let keywords: Vec<String> = manifest.words().into_iter().collect();
    let classes = class_list(&keywords);
    let spec = cfg.embedding.to_spec(keywords.len(), &cfg.frontend);
    let mut model = build_model(&spec, classes, &cfg.frontend, cfg.seed)?;
    println!(
        "model: {} keywords + background, {} parameters",
        keywords.len(),
        model.param_count()
    );

    let padding_variant = match args.padding_variant.as_deref() {
        None => cfg.training.padding_variant,
        Some("silence-only" | "silence_only") => PaddingVariant::SilenceOnly,
        Some("silence-and-context" | "silence_and_context") => PaddingVariant::SilenceAndContext,
        Some(other) => bail!(CoreError::Config(format!("unknown padding variant {other:?}"))),
    };
    let train_cfg = TrainingConfig {
        epochs: args.epochs.unwrap_or(cfg.training.epochs),
        batch_size: cfg.training.batch_size,
        learning_rate: cfg.training.learning_rate,
        noise_fraction: cfg.training.noise_fraction,
        augment: cfg.augment.clone(),
        seed: cfg.seed,
        padding_variant,
    };

    let noise = load_noise_dir(&noise_dir).context("loading noise clips")?;
    let report = train_embedding(&mut model, &manifest, &clips_root, &noise, &train_cfg)
        .context("training embedding model")?;

    if let Some(parent) = args.out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    model.save(&args.out).context("writing model file")?;

    let stem = args.out.with_extension("");
    let report_json = PathBuf::from(format!("{}.report.json", stem.display()));
    let epochs_csv = PathBuf::from(format!("{}.epochs.csv", stem.display()));
    let validation_csv = PathBuf::from(format!("{}.validation.csv", stem.display()));
    std::fs::write(&report_json, serde_json::to_string_pretty(&report)?)?;
    report.write_epochs_csv(&epochs_csv)?;
    report.write_validation_csv(&validation_csv)?;

    println!(
        "trained {} epochs; best epoch {}; val top-1 {:.4}",
        report.epoch_loss.len(),
        report.best_epoch,
        report.validation.overall_accuracy
    );
    for row in &report.validation.rows {
        println!(
            "  {}: {:.4} ({}/{})",
            row.language, row.accuracy, row.correct, row.samples
        );
    }
    println!("model: {}", args.out.display());

    record.add_outputs(&[args.out.clone(), report_json, epochs_csv, validation_csv]);
    let log_dir = args.out.parent().map(|p| p.to_path_buf()).unwrap_or_default();
    Ok(Some(log_dir))
}
