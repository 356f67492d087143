use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args as ClapArgs;

use mkws_core::audio::{load_audio, SpectrogramExtractor, DEFAULT_SAMPLE_RATE};
use mkws_core::dataset::{KeywordExtraction, PaddingMode, UnknownBank};
use mkws_core::fewshot::{build_training_mix, fine_tune, new_head, FineTuneConfig};
use mkws_core::model::{load_noise_dir, EmbeddingModel};
use mkws_core::Error as CoreError;

use crate::config::ExperimentConfig;
use crate::run_log::RunRecord;

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Trained embedding model file.
    #[arg(long)]
    pub embedding: PathBuf,

    /// The keyword this head detects.
    #[arg(long)]
    pub target: String,

    /// Exactly five 1-second target WAVs.
    #[arg(long, num_args = 5)]
    pub shots: Vec<PathBuf>,

    /// Unknown bank manifest (JSON lines).
    #[arg(long)]
    pub bank: PathBuf,

    /// Root for bank clip paths.
    #[arg(long)]
    pub clips_root: Option<PathBuf>,

    #[arg(long)]
    pub noise_dir: Option<PathBuf>,

    /// Head file to write.
    #[arg(long)]
    pub out: PathBuf,

    /// Language code recorded in the head file.
    #[arg(long, default_value = "und")]
    pub language: String,

    /// Passes over the 256-sample mix (overrides config).
    #[arg(long)]
    pub epochs: Option<usize>,
}

pub fn run(args: &Args, cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<Option<PathBuf>> {
    let clips_root = super::resolve_path(args.clips_root.as_deref(), cfg.data_root(), cfg, "clips-root")?;
    let noise_dir = super::noise_dir(args.noise_dir.as_deref(), cfg)?;
    record.add_input(&args.embedding);
    record.add_input(&args.bank);
    for shot in &args.shots {
        record.add_input(shot);
    }

    let embedding = EmbeddingModel::load(&args.embedding).context("loading embedding model")?;
    let bank = UnknownBank::load(&args.bank).context("loading unknown bank")?;
    let noise = load_noise_dir(&noise_dir)?;

    let mut shots = Vec::with_capacity(args.shots.len());
    for path in &args.shots {
        let audio = load_audio(path).with_context(|| format!("loading shot {}", path.display()))?;
        if audio.len() != DEFAULT_SAMPLE_RATE as usize {
            bail!(CoreError::Audio(format!(
                "shot {} is {:.3} s; shots must be exactly 1 second",
                path.display(),
                audio.duration_s()
            )));
        }
        shots.push(KeywordExtraction {
            word: args.target.clone(),
            language: args.language.clone(),
            clip_id: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            window_start_s: 0.0,
            window_end_s: 1.0,
            padding_mode: PaddingMode::Silence,
            cropped: false,
            audio,
        });
    }

    let ft_cfg = FineTuneConfig {
        seed: cfg.seed,
        epochs: args.epochs.unwrap_or(cfg.finetune.epochs),
        ..cfg.finetune.clone()
    };
    let extractor = SpectrogramExtractor::new(&embedding.frontend, DEFAULT_SAMPLE_RATE)?;
    let mix = build_training_mix(&shots, &bank, &clips_root, &noise, &extractor, &cfg.augment, &ft_cfg)
        .context("building training mix")?;

    let mut init = new_head(&embedding, &args.target, &args.language);
    init.shot_paths = args
        .shots
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    let head = fine_tune(&init, &embedding, &mix, &ft_cfg).context("fine-tuning head")?;
    if let Some(parent) = args.out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    head.save(&embedding, &args.out).context("writing head file")?;

    let (n_target, n_unknown, n_background) = ft_cfg.resolve_counts();
    println!(
        "fine-tuned {:?} on {} rows ({n_target} target / {n_unknown} unknown / {n_background} background), {} passes",
        args.target,
        mix.len(),
        ft_cfg.epochs
    );
    println!("embedding fingerprint: {}", &head.embedding_fingerprint[..16]);
    println!("head: {}", args.out.display());

    record.add_outputs(std::slice::from_ref(&args.out));
    let log_dir = args.out.parent().map(|p| p.to_path_buf()).unwrap_or_default();
    Ok(Some(log_dir))
}
