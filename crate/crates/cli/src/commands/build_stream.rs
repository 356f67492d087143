use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args as ClapArgs, ValueEnum};

use mkws_core::audio::{load_audio, save_audio, AudioBuffer};
use mkws_core::dataset::{parse_alignments, DatasetManifest, PaddingMode, Split};
use mkws_core::model::load_noise_dir;
use mkws_core::streaming::{build_sentence_stream, build_wakeword_stream, StreamSpec};
use mkws_core::Error as CoreError;

use crate::config::ExperimentConfig;
use crate::run_log::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeFlag {
    Wakeword,
    Sentence,
}

#[derive(Debug, ClapArgs)]
pub struct Args {
    #[arg(long, value_enum)]
    pub regime: RegimeFlag,

    #[arg(long)]
    pub target: String,

    /// Output prefix; writes <out>.wav and <out>.timeline.json.
    #[arg(long)]
    pub out: PathBuf,

    /// Wakeword regime: extraction manifest to draw clips from.
    #[arg(long)]
    pub manifest: Option<PathBuf>,

    #[arg(long)]
    pub clips_root: Option<PathBuf>,

    #[arg(long)]
    pub noise_dir: Option<PathBuf>,

    /// Sentence regime: alignments + source audio.
    #[arg(long)]
    pub alignments: Option<PathBuf>,

    #[arg(long)]
    pub audio_root: Option<PathBuf>,

    /// Wakeword: number of target occurrences (overrides config).
    #[arg(long)]
    pub targets: Option<usize>,

    /// Wakeword: number of non-target words (overrides config).
    #[arg(long)]
    pub nontargets: Option<usize>,

    /// Sentence: stream duration target in seconds (overrides config).
    #[arg(long)]
    pub duration: Option<f64>,
}

type ClipPools = (Vec<AudioBuffer>, Vec<(String, AudioBuffer)>);

fn pick_clips(
    manifest: &DatasetManifest,
    clips_root: &std::path::Path,
    target: &str,
    want_targets: usize,
    want_nontargets: usize,
    seed: u64,
) -> Result<ClipPools> {
    use rand::seq::SliceRandom;
    let mut rng = rand_seeded(seed);

    let mut target_entries: Vec<_> = manifest
        .entries
        .iter()
        .filter(|e| e.word == target && e.padding_mode == PaddingMode::Silence && e.split == Split::Test)
        .collect();
    // fall back to all splits when the test split is too small
    if target_entries.len() < want_targets {
        target_entries = manifest
            .entries
            .iter()
            .filter(|e| e.word == target && e.padding_mode == PaddingMode::Silence)
            .collect();
    }
    if target_entries.is_empty() {
        bail!(CoreError::Dataset(format!("no clips of target {target:?} in the manifest")));
    }
    target_entries.shuffle(&mut rng);
    target_entries.truncate(want_targets.max(1));

    let mut other_entries: Vec<_> = manifest
        .entries
        .iter()
        .filter(|e| e.word != target && e.padding_mode == PaddingMode::Silence)
        .collect();
    other_entries.shuffle(&mut rng);
    other_entries.truncate(want_nontargets);

    let mut targets = Vec::new();
    for e in &target_entries {
        targets.push(load_audio(clips_root.join(&e.path))?);
    }
    let mut nontargets = Vec::new();
    for e in &other_entries {
        nontargets.push((e.word.clone(), load_audio(clips_root.join(&e.path))?));
    }
    Ok((targets, nontargets))
}

fn rand_seeded(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng as _;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

pub fn run(args: &Args, cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<Option<PathBuf>> {
    let (stream, timeline) = match args.regime {
        RegimeFlag::Wakeword => {
            let manifest_path = args
                .manifest
                .as_ref()
                .ok_or_else(|| CoreError::Config("wakeword regime needs --manifest".into()))?;
            let clips_root =
                super::resolve_path(args.clips_root.as_deref(), cfg.data_root(), cfg, "clips-root")?;
            let noise_dir = super::noise_dir(args.noise_dir.as_deref(), cfg)?;
            record.add_input(manifest_path);

            let manifest = DatasetManifest::load(manifest_path)?;
            let (targets, nontargets) = pick_clips(
                &manifest,
                &clips_root,
                &args.target,
                args.targets.unwrap_or(cfg.streaming.wakeword_targets),
                args.nontargets.unwrap_or(cfg.streaming.wakeword_nontargets),
                cfg.seed,
            )?;
            let noise = load_noise_dir(&noise_dir)?;
            let spec = StreamSpec {
                gap_min_s: cfg.streaming.gap_min_s,
                gap_max_s: cfg.streaming.gap_max_s,
                ..StreamSpec::wakeword(args.target.clone())
            };
            build_wakeword_stream(&targets, &args.target, &nontargets, &noise, &spec, cfg.seed)?
        }
        RegimeFlag::Sentence => {
            let alignments = args
                .alignments
                .as_ref()
                .ok_or_else(|| CoreError::Config("sentence regime needs --alignments".into()))?;
            let audio_root =
                super::resolve_path(args.audio_root.as_deref(), cfg.data_root(), cfg, "audio-root")?;
            record.add_input(alignments);

            let parse = parse_alignments(alignments)?;
            let mut by_clip: BTreeMap<String, Vec<mkws_core::dataset::AlignmentRecord>> =
                BTreeMap::new();
            for rec in parse.records {
                by_clip.entry(rec.clip_id.clone()).or_default().push(rec);
            }
            let mut sentences = Vec::new();
            for (clip_id, recs) in by_clip {
                let clip = load_audio(audio_root.join(format!("{clip_id}.wav")))
                    .with_context(|| format!("loading sentence clip {clip_id}"))?;
                sentences.push((clip, recs));
            }
            let duration = args.duration.unwrap_or(cfg.streaming.sentence_duration_s);
            build_sentence_stream(&sentences, &args.target, duration, cfg.seed)?
        }
    };

    let wav_path = PathBuf::from(format!("{}.wav", args.out.display()));
    let timeline_path = PathBuf::from(format!("{}.timeline.json", args.out.display()));
    if let Some(parent) = wav_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    save_audio(&stream, &wav_path)?;
    timeline.save(&timeline_path)?;

    println!(
        "stream: {:.1} s, {} target + {} non-target occurrences",
        timeline.duration_s,
        timeline.target_count(),
        timeline.nontarget_count()
    );
    println!("wav: {}", wav_path.display());
    println!("timeline: {}", timeline_path.display());

    record.add_outputs(&[wav_path, timeline_path]);
    let log_dir = args.out.parent().map(|p| p.to_path_buf()).unwrap_or_default();
    Ok(Some(log_dir))
}
