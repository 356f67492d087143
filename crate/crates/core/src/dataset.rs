//! Keyword dataset generation: alignment parsing, 1-second clip
//! extraction with silence or context padding, split manifests, and the
//! bank of "unknown" non-target samples used when fine-tuning.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::fingerprint::stable_hash64;

/// One aligned word occurrence inside a source clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRecord {
    pub clip_id: String,
    pub word: String,
    pub start_s: f64,
    pub end_s: f64,
}

/// A row that failed validation, kept for the error report.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentIssue {
    /// 1-based line number in the CSV (header = line 1).
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct AlignmentParse {
    pub records: Vec<AlignmentRecord>,
    pub issues: Vec<AlignmentIssue>,
}

/// Parse an alignment CSV with header `clip_id,word,start_s,end_s`.
/// Malformed rows are collected into the issue list; valid rows are still
/// returned. Zero valid rows is an error.
pub fn parse_alignments<P: AsRef<Path>>(path: P) -> Result<AlignmentParse> {
    let file = File::open(path.as_ref())?;
    parse_alignments_reader(file)
}

pub fn parse_alignments_reader<R: Read>(reader: R) -> Result<AlignmentParse> {
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    {
        let headers = csv_reader.headers()?;
        let expected = ["clip_id", "word", "start_s", "end_s"];
        let got: Vec<&str> = headers.iter().collect();
        if got != expected {
            return Err(Error::AlignmentParse(format!(
                "header must be clip_id,word,start_s,end_s; got {}",
                got.join(",")
            )));
        }
    }

    let mut records = Vec::new();
    let mut issues = Vec::new();
    for (idx, row) in csv_reader.records().enumerate() {
        let line = idx + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                issues.push(AlignmentIssue { line, reason: format!("csv: {e}") });
                continue;
            }
        };
        if row.len() != 4 {
            issues.push(AlignmentIssue {
                line,
                reason: format!("expected 4 fields, got {}", row.len()),
            });
            continue;
        }
        let clip_id = row[0].trim().to_string();
        let word = row[1].trim().to_lowercase();
        let start_s: f64 = match row[2].trim().parse() {
            Ok(v) => v,
            Err(_) => {
                issues.push(AlignmentIssue { line, reason: format!("bad start_s {:?}", &row[2]) });
                continue;
            }
        };
        let end_s: f64 = match row[3].trim().parse() {
            Ok(v) => v,
            Err(_) => {
                issues.push(AlignmentIssue { line, reason: format!("bad end_s {:?}", &row[3]) });
                continue;
            }
        };
        if clip_id.is_empty() {
            issues.push(AlignmentIssue { line, reason: "empty clip_id".into() });
            continue;
        }
        if word.is_empty() {
            issues.push(AlignmentIssue { line, reason: "empty word".into() });
            continue;
        }
        if !(start_s >= 0.0 && start_s < end_s && end_s.is_finite()) {
            issues.push(AlignmentIssue {
                line,
                reason: format!("invalid span [{start_s}, {end_s}]"),
            });
            continue;
        }
        records.push(AlignmentRecord { clip_id, word, start_s, end_s });
    }

    if records.is_empty() {
        return Err(Error::AlignmentParse(format!(
            "no valid alignment rows ({} malformed)",
            issues.len()
        )));
    }
    Ok(AlignmentParse { records, issues })
}

/// Pick the `top_k` most frequent words of at least `min_char_len`
/// characters, ties broken lexicographically. Output order is descending
/// by count and independent of the input map's iteration order.
pub fn select_keywords<'a, I>(word_counts: I, min_char_len: usize, top_k: usize) -> Vec<String>
where
    I: IntoIterator<Item = (&'a String, &'a usize)>,
{
    let mut eligible: Vec<(&String, usize)> = word_counts
        .into_iter()
        .filter(|(w, _)| w.chars().count() >= min_char_len)
        .map(|(w, &c)| (w, c))
        .collect();
    eligible.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    eligible.into_iter().take(top_k).map(|(w, _)| w.clone()).collect()
}

/// How a 1-second keyword window is filled around the word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingMode {
    /// Word audio centered in a zero buffer.
    Silence,
    /// The surrounding original audio, window centered on the word.
    Context,
}

impl PaddingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PaddingMode::Silence => "silence",
            PaddingMode::Context => "context",
        }
    }
}

/// A 1-second extracted keyword clip with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordExtraction {
    pub word: String,
    pub language: String,
    pub clip_id: String,
    /// Span of the source clip covered by this extraction, in seconds.
    pub window_start_s: f64,
    pub window_end_s: f64,
    pub padding_mode: PaddingMode,
    /// Word was longer than 1 s and was center-cropped.
    pub cropped: bool,
    pub audio: AudioBuffer,
}

impl KeywordExtraction {
    /// Relative storage path: `<language>/<word>/<clip_id>_<start_ms>.wav`,
    /// with a `_ctx` suffix for context-padded clips so both variants of
    /// one occurrence can coexist.
    pub fn rel_path(&self) -> PathBuf {
        let start_ms = (self.word_anchor_ms()).round() as i64;
        let suffix = match self.padding_mode {
            PaddingMode::Silence => "",
            PaddingMode::Context => "_ctx",
        };
        PathBuf::from(&self.language)
            .join(&self.word)
            .join(format!("{}_{}{}.wav", self.clip_id, start_ms, suffix))
    }

    fn word_anchor_ms(&self) -> f64 {
        match self.padding_mode {
            PaddingMode::Silence => self.window_start_s * 1000.0,
            // context windows shift; anchor on the covered span start too
            PaddingMode::Context => self.window_start_s * 1000.0,
        }
    }
}

const CLIP_DURATION_S: f64 = 1.0;

/// Cut a 1-second keyword clip out of `source` around the aligned span.
///
/// Silence mode centers the word audio in zeros; context mode takes the
/// 1-second window of original audio centered on the word midpoint,
/// shifted inward at clip boundaries. Words longer than one second are
/// center-cropped and flagged.
pub fn extract_keyword_clip(
    source: &AudioBuffer,
    rec: &AlignmentRecord,
    language: &str,
    mode: PaddingMode,
) -> Result<KeywordExtraction> {
    let sr = f64::from(source.sample_rate);
    let n = source.len();
    let out_len = (CLIP_DURATION_S * sr).round() as usize;
    let start = (rec.start_s * sr).round() as usize;
    let end = (rec.end_s * sr).round() as usize;
    if start >= end || end > n {
        return Err(Error::Dataset(format!(
            "span [{}, {}] of word {:?} lies outside clip {} ({} samples)",
            rec.start_s, rec.end_s, rec.word, rec.clip_id, n
        )));
    }

    let mut cropped = false;
    let (word_start, word_end) = if end - start > out_len {
        cropped = true;
        let mid = (start + end) / 2;
        let half = out_len / 2;
        let s = mid.saturating_sub(half).min(n - out_len);
        (s, s + out_len)
    } else {
        (start, end)
    };

    let (samples, win_start, win_end) = match mode {
        PaddingMode::Silence => {
            let word_len = word_end - word_start;
            let offset = (out_len - word_len) / 2;
            let mut samples = vec![0.0f32; out_len];
            samples[offset..offset + word_len]
                .copy_from_slice(&source.samples[word_start..word_end]);
            (samples, word_start as f64 / sr, word_end as f64 / sr)
        }
        PaddingMode::Context => {
            if n < out_len {
                // source shorter than the window: center what exists in zeros
                let offset = (out_len - n) / 2;
                let mut samples = vec![0.0f32; out_len];
                samples[offset..offset + n].copy_from_slice(&source.samples);
                cropped = true;
                (samples, 0.0, n as f64 / sr)
            } else {
                let mid = (word_start + word_end) / 2;
                let half = out_len / 2;
                let s = mid.saturating_sub(half).min(n - out_len);
                let samples = source.samples[s..s + out_len].to_vec();
                (samples, s as f64 / sr, (s + out_len) as f64 / sr)
            }
        }
    };

    Ok(KeywordExtraction {
        word: rec.word.clone(),
        language: language.to_string(),
        clip_id: rec.clip_id.clone(),
        window_start_s: win_start,
        window_end_s: win_end,
        padding_mode: mode,
        cropped,
        audio: AudioBuffer {
            samples,
            sample_rate: source.sample_rate,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// One manifest line. Serialized as JSON-lines with exactly the fields
/// {path, word, language, split, padding_mode, flags}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub word: String,
    pub language: String,
    pub split: Split,
    pub padding_mode: PaddingMode,
    #[serde(default)]
    pub flags: Vec<String>,
    /// Source clip id, recovered from `path` on load; not serialized.
    #[serde(skip)]
    pub clip_id: String,
}

impl ManifestEntry {
    fn derive_clip_id(&mut self) {
        if !self.clip_id.is_empty() {
            return;
        }
        let stem = Path::new(&self.path)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("");
        let stem = stem.strip_suffix("_ctx").unwrap_or(stem);
        self.clip_id = match stem.rsplit_once('_') {
            Some((id, _start_ms)) => id.to_string(),
            None => stem.to_string(),
        };
    }
}

/// The dataset population: every extracted sample with its assigned split.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    /// Sample counts per (word, split).
    pub fn counts(&self) -> BTreeMap<(String, Split), usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry((e.word.clone(), e.split)).or_insert(0) += 1;
        }
        counts
    }

    pub fn words(&self) -> BTreeSet<String> {
        self.entries.iter().map(|e| e.word.clone()).collect()
    }

    pub fn languages(&self) -> BTreeSet<String> {
        self.entries.iter().map(|e| e.language.clone()).collect()
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut file = File::create(path)?;
        for e in &self.entries {
            serde_json::to_writer(&mut file, e)?;
            file.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = File::open(path.as_ref())?;
        let reader = BufReader::new(file);
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| {
                Error::Dataset(format!("{}:{}: {e}", path.as_ref().display(), i + 1))
            })?;
            entry.derive_clip_id();
            entries.push(entry);
        }
        Ok(Self { entries })
    }
}

#[derive(Debug, Clone)]
pub struct ManifestBuild {
    pub manifest: DatasetManifest,
    pub warnings: Vec<String>,
}

/// Assign train/val/test splits, stratified by word at clip granularity.
///
/// Clips of each word are ordered by a seeded portable hash of
/// (word, clip_id) and apportioned by largest remainder, so repeated runs
/// (and different machines) agree exactly, no clip is shared across splits
/// for the same word, and a word with 100 single-sample clips lands at
/// 80/10/10 under the default fractions. Words with fewer than 3 samples
/// go wholly to train with a warning.
pub fn build_manifest(
    mut entries: Vec<ManifestEntry>,
    split_fractions: (f64, f64, f64),
    seed: u64,
) -> Result<ManifestBuild> {
    let (f_train, f_val, f_test) = split_fractions;
    if f_train < 0.0 || f_val < 0.0 || f_test < 0.0 {
        return Err(Error::Dataset("split fractions must be non-negative".into()));
    }
    if (f_train + f_val + f_test - 1.0).abs() > 1e-9 {
        return Err(Error::Dataset(format!(
            "split fractions must sum to 1, got {}",
            f_train + f_val + f_test
        )));
    }
    for e in &mut entries {
        e.derive_clip_id();
    }

    // word -> clip_id -> entry indices
    let mut by_word: BTreeMap<&str, BTreeMap<&str, Vec<usize>>> = BTreeMap::new();
    for (i, e) in entries.iter().enumerate() {
        by_word
            .entry(e.word.as_str())
            .or_default()
            .entry(e.clip_id.as_str())
            .or_default()
            .push(i);
    }

    let mut warnings = Vec::new();
    let mut assignments: Vec<(usize, Split)> = Vec::with_capacity(entries.len());
    for (word, clips) in &by_word {
        let total_samples: usize = clips.values().map(Vec::len).sum();
        if total_samples < 3 {
            warnings.push(format!(
                "word {word:?} has only {total_samples} samples; assigned wholly to train"
            ));
            for idxs in clips.values() {
                for &i in idxs {
                    assignments.push((i, Split::Train));
                }
            }
            continue;
        }

        let mut ordered: Vec<(&str, u64)> = clips
            .keys()
            .map(|&cid| (cid, stable_hash64(seed, &[word.as_bytes(), cid.as_bytes()])))
            .collect();
        ordered.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(b.0)));

        let n = ordered.len();
        let (n_train, n_val, _n_test) = apportion(n, f_train, f_val, f_test);
        for (rank, (cid, _)) in ordered.iter().enumerate() {
            let split = if rank < n_train {
                Split::Train
            } else if rank < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            for &i in &clips[cid] {
                assignments.push((i, split));
            }
        }
    }

    for (i, split) in assignments {
        entries[i].split = split;
    }
    Ok(ManifestBuild {
        manifest: DatasetManifest { entries },
        warnings,
    })
}

/// Largest-remainder apportionment of `n` items over three fractions.
fn apportion(n: usize, f_train: f64, f_val: f64, f_test: f64) -> (usize, usize, usize) {
    let raw = [f_train * n as f64, f_val * n as f64, f_test * n as f64];
    let mut counts = [raw[0].floor() as usize, raw[1].floor() as usize, raw[2].floor() as usize];
    let mut rem = n - counts.iter().sum::<usize>();
    // distribute remainder by descending fractional part, ties favoring train
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if rem == 0 {
            break;
        }
        counts[i] += 1;
        rem -= 1;
    }
    (counts[0], counts[1], counts[2])
}

/// Fixed pool of non-target samples used as the "unknown" class when
/// fine-tuning few-shot heads.
#[derive(Debug, Clone, PartialEq)]
pub struct UnknownBank {
    pub entries: Vec<ManifestEntry>,
}

impl UnknownBank {
    /// Entries usable against `target`: the bank must never contain the
    /// few-shot target word.
    pub fn entries_excluding(&self, target: &str) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.word != target).collect()
    }

    pub fn words(&self) -> BTreeSet<String> {
        self.entries.iter().map(|e| e.word.clone()).collect()
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        DatasetManifest { entries: self.entries.clone() }.save(path)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        Ok(Self { entries: DatasetManifest::load(path)?.entries })
    }
}

/// Per-word ceiling for a bank of `size` over `num_words` distinct words:
/// 2% of the bank, relaxed to the fair share when the vocabulary is too
/// small for the 2% rule to be satisfiable (fewer than 50 words).
pub fn bank_per_word_cap(size: usize, num_words: usize) -> usize {
    let two_percent = ((size as f64) * 0.02).floor() as usize;
    let fair_share = size.div_ceil(num_words.max(1));
    two_percent.max(fair_share).max(1)
}

/// Draw `size` samples uniformly without replacement from the manifest,
/// skipping `excluded_words`, stratified so no single word exceeds the
/// per-word cap (2% of the bank at vocabulary scale).
pub fn build_unknown_bank(
    manifest: &DatasetManifest,
    excluded_words: &BTreeSet<String>,
    size: usize,
    seed: u64,
) -> Result<UnknownBank> {
    if size == 0 {
        return Err(Error::Dataset("bank size must be positive".into()));
    }
    let eligible: Vec<&ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| !excluded_words.contains(&e.word))
        .collect();

    let mut word_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in &eligible {
        *word_counts.entry(e.word.as_str()).or_insert(0) += 1;
    }
    let per_word_cap = bank_per_word_cap(size, word_counts.len());
    let capacity: usize = word_counts.values().map(|&c| c.min(per_word_cap)).sum();
    if capacity < size {
        return Err(Error::Dataset(format!(
            "insufficient eligible samples for unknown bank: need {size}, capped capacity {capacity}"
        )));
    }

    let mut order: Vec<usize> = (0..eligible.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut taken: BTreeMap<&str, usize> = BTreeMap::new();
    let mut entries = Vec::with_capacity(size);
    for idx in order {
        let e = eligible[idx];
        let count = taken.entry(e.word.as_str()).or_insert(0);
        if *count >= per_word_cap {
            continue;
        }
        *count += 1;
        entries.push(e.clone());
        if entries.len() == size {
            break;
        }
    }
    debug_assert_eq!(entries.len(), size);
    Ok(UnknownBank { entries })
}
