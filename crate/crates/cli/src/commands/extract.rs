use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args as ClapArgs, ValueEnum};

use mkws_core::audio::{load_audio, save_audio};
use mkws_core::dataset::{
    build_manifest, build_unknown_bank, extract_keyword_clip, parse_alignments, select_keywords,
    ManifestEntry, PaddingMode, Split,
};
use mkws_core::Error as CoreError;

use crate::config::ExperimentConfig;
use crate::run_log::RunRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PaddingFlag {
    Silence,
    Context,
    Both,
}

impl PaddingFlag {
    fn modes(self) -> &'static [PaddingMode] {
        match self {
            PaddingFlag::Silence => &[PaddingMode::Silence],
            PaddingFlag::Context => &[PaddingMode::Context],
            PaddingFlag::Both => &[PaddingMode::Silence, PaddingMode::Context],
        }
    }
}

#[derive(Debug, ClapArgs)]
pub struct Args {
    /// Alignment CSV (clip_id,word,start_s,end_s).
    #[arg(long)]
    pub alignments: PathBuf,

    /// Directory holding <clip_id>.wav source audio.
    #[arg(long)]
    pub audio_root: Option<PathBuf>,

    /// Output directory for clips, manifest, and unknown bank.
    #[arg(long)]
    pub out: PathBuf,

    /// Language code recorded in the manifest.
    #[arg(long, default_value = "und")]
    pub language: String,

    #[arg(long, value_enum, default_value = "silence")]
    pub padding: PaddingFlag,

    /// Keep the top-k most frequent words (overrides config).
    #[arg(long)]
    pub top_k: Option<usize>,

    /// Unknown-bank size (overrides config; clamped to what the corpus
    /// supports under the 2% per-word cap).
    #[arg(long)]
    pub bank_size: Option<usize>,

    /// Words excluded from the unknown bank (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub bank_exclude: Vec<String>,
}

pub fn run(args: &Args, cfg: &ExperimentConfig, record: &mut RunRecord) -> Result<Option<PathBuf>> {
    let audio_root = super::resolve_path(
        args.audio_root.as_deref(),
        cfg.data_root(),
        cfg,
        "audio-root",
    )?;
    record.add_input(&args.alignments);

    let parse = parse_alignments(&args.alignments).context("parsing alignments")?;
    if !parse.issues.is_empty() {
        eprintln!("mkws: {} malformed alignment rows skipped:", parse.issues.len());
        for issue in parse.issues.iter().take(5) {
            eprintln!("  line {}: {}", issue.line, issue.reason);
        }
    }

    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for rec in &parse.records {
        *counts.entry(rec.word.clone()).or_insert(0) += 1;
    }
    let count_refs: Vec<(&String, &usize)> = counts.iter().collect();
    let top_k = args.top_k.unwrap_or(cfg.keywords.top_k);
    let selected = select_keywords(count_refs, cfg.keywords.min_char_len, top_k);
    if selected.is_empty() {
        bail!(CoreError::Dataset("no keywords survive the length filter".into()));
    }
    let selected_set: BTreeSet<&str> = selected.iter().map(String::as_str).collect();

    // group occurrences by source clip so each wav is read once
    let mut by_clip: BTreeMap<&str, Vec<&mkws_core::dataset::AlignmentRecord>> = BTreeMap::new();
    for rec in &parse.records {
        if selected_set.contains(rec.word.as_str()) {
            by_clip.entry(rec.clip_id.as_str()).or_default().push(rec);
        }
    }

    let mut entries: Vec<ManifestEntry> = Vec::new();
    let mut extraction_errors = 0usize;
    for (clip_id, recs) in &by_clip {
        let source_path = audio_root.join(format!("{clip_id}.wav"));
        let source = load_audio(&source_path)
            .with_context(|| format!("loading source clip {}", source_path.display()))?;
        for rec in recs {
            for &mode in args.padding.modes() {
                match extract_keyword_clip(&source, rec, &args.language, mode) {
                    Ok(extraction) => {
                        let rel = extraction.rel_path();
                        let dest = args.out.join(&rel);
                        if let Some(parent) = dest.parent() {
                            std::fs::create_dir_all(parent)?;
                        }
                        save_audio(&extraction.audio, &dest)?;
                        let mut flags = Vec::new();
                        if extraction.cropped {
                            flags.push("cropped".to_string());
                        }
                        entries.push(ManifestEntry {
                            path: rel.to_string_lossy().into_owned(),
                            word: extraction.word.clone(),
                            language: args.language.clone(),
                            split: Split::Train,
                            padding_mode: mode,
                            flags,
                            clip_id: extraction.clip_id.clone(),
                        });
                    }
                    Err(err) => {
                        extraction_errors += 1;
                        eprintln!("mkws: skipping {clip_id}/{}: {err}", rec.word);
                    }
                }
            }
        }
    }
    if entries.is_empty() {
        bail!(CoreError::Dataset(format!(
            "zero extractions ({extraction_errors} failures)"
        )));
    }

    let build = build_manifest(entries, cfg.split_fractions.as_tuple(), cfg.seed)
        .context("assigning splits")?;
    for warning in &build.warnings {
        eprintln!("mkws: warning: {warning}");
    }
    let manifest_path = args.out.join("manifest.jsonl");
    build.manifest.save(&manifest_path)?;

    // unknown bank from silence-padded samples; clamp the requested size
    // to what the 2% per-word cap allows on this corpus
    let silence_manifest = mkws_core::dataset::DatasetManifest {
        entries: build
            .manifest
            .entries
            .iter()
            .filter(|e| e.padding_mode == PaddingMode::Silence)
            .cloned()
            .collect(),
    };
    let excluded: BTreeSet<String> = args.bank_exclude.iter().cloned().collect();
    let requested = args.bank_size.unwrap_or_else(|| cfg.bank_size_default());
    let bank_size = feasible_bank_size(&silence_manifest, &excluded, requested);
    if bank_size == 0 {
        bail!(CoreError::Dataset("no eligible samples for the unknown bank".into()));
    }
    if bank_size < requested {
        eprintln!("mkws: warning: bank size clamped from {requested} to {bank_size}");
    }
    let bank = build_unknown_bank(&silence_manifest, &excluded, bank_size, cfg.seed)?;
    let bank_path = args.out.join("unknown_bank.jsonl");
    bank.save(&bank_path)?;

    let counts = build.manifest.counts();
    let total: usize = counts.values().sum();
    println!(
        "extracted {total} clips across {} keywords ({} failures)",
        selected.len(),
        extraction_errors
    );
    println!("manifest: {}", manifest_path.display());
    println!("unknown bank: {} samples at {}", bank.entries.len(), bank_path.display());

    record.add_outputs(&[manifest_path, bank_path]);
    Ok(Some(args.out.clone()))
}

/// Largest bank size <= requested that the corpus supports under the
/// per-word cap (cap depends on size, so iterate to a fixpoint).
fn feasible_bank_size(
    manifest: &mkws_core::dataset::DatasetManifest,
    excluded: &BTreeSet<String>,
    requested: usize,
) -> usize {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &manifest.entries {
        if !excluded.contains(&e.word) {
            *counts.entry(e.word.as_str()).or_insert(0) += 1;
        }
    }
    let capacity = |size: usize| -> usize {
        let cap = mkws_core::dataset::bank_per_word_cap(size, counts.len());
        counts.values().map(|&c| c.min(cap)).sum()
    };
    let mut size = requested;
    for _ in 0..10 {
        let cap = capacity(size);
        if cap >= size {
            return size;
        }
        size = cap;
    }
    size
}

#[allow(unused_imports)]
use mkws_core::dataset::AlignmentRecord;
