//! 5-shot keyword models: a 3-class softmax head (target / unknown /
//! background) fine-tuned on features from the frozen embedding model.
//!
//! Because the embedding is frozen, head training is logistic regression
//! on cached feature vectors: features for the 256-row training mix are
//! computed once and the head is fit with Adam in milliseconds.

mod eval;

pub use eval::{
    aggregate_language_report, build_eval_pools, default_threshold_grid, evaluate_classification,
    f1_from_counts, roc_from_scores, write_roc_csv, write_summary_json, EvalPools, EvalSample,
    EvalSpec, EvalSummary, KeywordF1, LanguageCurve, LanguageF1, LanguageReport, NegativeCategory,
    RocCurve, RocPoint,
};

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{load_audio, AudioBuffer, Spectrogram, SpectrogramExtractor, DEFAULT_SAMPLE_RATE};
use crate::augment::{augment_waveform, spec_augment_rng, AugmentConfig};
use crate::dataset::{KeywordExtraction, UnknownBank};
use crate::error::{Error, Result};
use crate::fingerprint::stable_hash64;
use crate::model::{
    read_header, ContainerHeader, EmbeddingModel, FewshotHeader,
};
use crate::nn::{
    dense_backward, dense_forward, softmax_xent_backward, softmax_xent_forward, Adam, Parameter,
    Tensor,
};

/// Head class order is fixed: target, unknown, background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadClass {
    Target = 0,
    Unknown = 1,
    Background = 2,
}

pub const HEAD_CLASSES: [&str; 3] = ["target", "unknown", "background"];

/// Affine 3-class head over embedding features.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotHead {
    pub target_word: String,
    pub language: String,
    /// embedding_units x 3.
    pub weight: Tensor,
    /// 3.
    pub bias: Tensor,
    /// Parameter hash of the embedding this head was trained against.
    pub embedding_fingerprint: String,
    /// Paths of the five training shots (excluded from evaluation pools).
    pub shot_paths: Vec<String>,
}

/// Fine-tuning hyperparameters (mix composition and optimizer schedule).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FineTuneConfig {
    pub num_target_examples: usize,
    pub total_samples: usize,
    pub batch_size: usize,
    pub target_fraction: f64,
    pub unknown_fraction: f64,
    pub noise_fraction: f64,
    /// Distinct bank samples drawn before subsampling to the unknown share.
    pub unknown_draw: usize,
    /// Passes over the mix.
    pub epochs: usize,
    pub learning_rate: f32,
    pub seed: u64,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        Self {
            num_target_examples: 5,
            total_samples: 256,
            batch_size: 64,
            target_fraction: 0.45,
            unknown_fraction: 0.45,
            noise_fraction: 0.10,
            unknown_draw: 128,
            epochs: 24,
            learning_rate: 0.001,
            seed: 0,
        }
    }
}

impl FineTuneConfig {
    pub fn validate(&self) -> Result<()> {
        let total = self.target_fraction + self.unknown_fraction + self.noise_fraction;
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mix fractions must sum to 1, got {total}")));
        }
        if self.batch_size == 0 || !self.total_samples.is_multiple_of(self.batch_size) {
            return Err(Error::Config(format!(
                "total_samples {} must be divisible by batch_size {}",
                self.total_samples, self.batch_size
            )));
        }
        if self.num_target_examples == 0 {
            return Err(Error::Config("need at least one target example".into()));
        }
        Ok(())
    }

    /// Exact class counts: fractions rounded, remainder to background.
    /// Defaults resolve to (115, 115, 26).
    pub fn resolve_counts(&self) -> (usize, usize, usize) {
        let target = (self.total_samples as f64 * self.target_fraction).round() as usize;
        let unknown = (self.total_samples as f64 * self.unknown_fraction).round() as usize;
        let background = self.total_samples - target - unknown;
        (target, unknown, background)
    }
}

/// Where a mix row came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MixProvenance {
    /// Index into the five shots.
    Shot(usize),
    /// Index into the unknown bank's entry list.
    Bank(usize),
    Noise,
}

#[derive(Debug, Clone)]
pub struct MixRow {
    pub spec: Spectrogram,
    pub label: HeadClass,
    pub provenance: MixProvenance,
}

/// Assemble the fine-tuning mix: augmented copies of the five shots,
/// `unknown_draw` distinct bank samples subsampled to the unknown share,
/// and pure-noise background crops. Deterministic per seed.
pub fn build_training_mix(
    shots: &[KeywordExtraction],
    bank: &UnknownBank,
    clip_root: &Path,
    noise: &[AudioBuffer],
    frontend_extractor: &SpectrogramExtractor,
    augment_cfg: &AugmentConfig,
    cfg: &FineTuneConfig,
) -> Result<Vec<MixRow>> {
    cfg.validate()?;
    if shots.len() != cfg.num_target_examples {
        return Err(Error::Config(format!(
            "expected exactly {} target shots, got {}",
            cfg.num_target_examples,
            shots.len()
        )));
    }
    let target_word = &shots[0].word;
    if shots.iter().any(|s| &s.word != target_word) {
        return Err(Error::Config("shots must all share one target word".into()));
    }
    if noise.is_empty() {
        return Err(Error::Config("noise clips required for the background share".into()));
    }

    let eligible: Vec<usize> = bank
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| &e.word != target_word)
        .map(|(i, _)| i)
        .collect();
    if eligible.len() < cfg.unknown_draw {
        return Err(Error::Dataset(format!(
            "unknown bank has {} usable samples, need {}",
            eligible.len(),
            cfg.unknown_draw
        )));
    }

    let (n_target, n_unknown, n_background) = cfg.resolve_counts();
    let mut rows = Vec::with_capacity(cfg.total_samples);

    for j in 0..n_target {
        let shot_idx = j % shots.len();
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash64(
            cfg.seed,
            &[b"mix-target", &(j as u64).to_le_bytes()],
        ));
        let noise_clip = &noise[rng.gen_range(0..noise.len())];
        let wav = augment_waveform(&shots[shot_idx].audio, Some(noise_clip), augment_cfg, &mut rng)?;
        let spec = frontend_extractor.compute(&wav.samples)?;
        rows.push(MixRow {
            spec: spec_augment_rng(&spec, augment_cfg, &mut rng),
            label: HeadClass::Target,
            provenance: MixProvenance::Shot(shot_idx),
        });
    }

    let mut draw_rng = ChaCha8Rng::seed_from_u64(stable_hash64(cfg.seed, &[b"mix-draw"]));
    let mut drawn = eligible;
    drawn.shuffle(&mut draw_rng);
    drawn.truncate(cfg.unknown_draw);

    let mut clip_cache: BTreeMap<String, Spectrogram> = BTreeMap::new();
    for j in 0..n_unknown {
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash64(
            cfg.seed,
            &[b"mix-unknown", &(j as u64).to_le_bytes()],
        ));
        let bank_idx = drawn[rng.gen_range(0..drawn.len())];
        let entry = &bank.entries[bank_idx];
        let spec = match clip_cache.get(&entry.path) {
            Some(s) => s.clone(),
            None => {
                let clip = load_audio(clip_root.join(&entry.path))?;
                let s = frontend_extractor.compute(&clip.samples)?;
                clip_cache.insert(entry.path.clone(), s.clone());
                s
            }
        };
        rows.push(MixRow {
            spec,
            label: HeadClass::Unknown,
            provenance: MixProvenance::Bank(bank_idx),
        });
    }

    for j in 0..n_background {
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash64(
            cfg.seed,
            &[b"mix-noise", &(j as u64).to_le_bytes()],
        ));
        let crop = crate::model::background_crop(noise, &mut rng);
        rows.push(MixRow {
            spec: frontend_extractor.compute(&crop.samples)?,
            label: HeadClass::Background,
            provenance: MixProvenance::Noise,
        });
    }

    Ok(rows)
}

/// Fresh zero-initialized head (uniform 1/3 scores before training).
pub fn new_head(embedding: &EmbeddingModel, target_word: &str, language: &str) -> FewShotHead {
    let e = embedding.spec.embedding_units;
    FewShotHead {
        target_word: target_word.to_string(),
        language: language.to_string(),
        weight: Tensor::zeros(&[e, 3]),
        bias: Tensor::zeros(&[3]),
        embedding_fingerprint: embedding.param_hash(),
        shot_paths: Vec::new(),
    }
}

/// Train the head by softmax cross-entropy + Adam on precomputed feature
/// rows. Pure function of (init, features, labels, cfg).
pub fn fine_tune_features(
    init: &FewShotHead,
    features: &Tensor,
    labels: &[HeadClass],
    cfg: &FineTuneConfig,
) -> Result<FewShotHead> {
    let n = features.shape()[0];
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {} feature rows", labels.len(), n)));
    }
    let label_idx: Vec<usize> = labels.iter().map(|&l| l as usize).collect();

    let mut weight = Parameter::new("head.weight", init.weight.clone());
    let mut bias = Parameter::new("head.bias", init.bias.clone());
    let mut adam = Adam::new(cfg.learning_rate);
    let k = 3usize;

    for pass in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash64(
            cfg.seed,
            &[b"head-pass", &(pass as u64).to_le_bytes()],
        ));
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let e = features.shape()[1];
            let mut batch_feats = Vec::with_capacity(batch.len() * e);
            let mut batch_labels = Vec::with_capacity(batch.len());
            for &i in batch {
                batch_feats.extend_from_slice(&features.data()[i * e..(i + 1) * e]);
                batch_labels.push(label_idx[i]);
            }
            let input = Tensor::from_vec(&[batch.len(), e], batch_feats)?;
            let logits = dense_forward(&input, &weight.value, &bias.value)?;
            let fwd = softmax_xent_forward(&logits, &batch_labels)?;
            let grad = softmax_xent_backward(&fwd.probs, &batch_labels);
            let (_, g_w, g_b) = dense_backward(&input, &weight.value, &grad)?;
            weight.zero_grad();
            bias.zero_grad();
            weight.accumulate_grad(&g_w);
            bias.accumulate_grad(&g_b);
            adam.step(&mut [&mut weight, &mut bias])?;
            let _ = k;
        }
    }

    Ok(FewShotHead {
        target_word: init.target_word.clone(),
        language: init.language.clone(),
        weight: weight.value,
        bias: bias.value,
        embedding_fingerprint: init.embedding_fingerprint.clone(),
        shot_paths: init.shot_paths.clone(),
    })
}

/// Fine-tune on a training mix: features are extracted once through the
/// frozen embedding, whose parameters are hash-checked before and after.
pub fn fine_tune(
    init: &FewShotHead,
    embedding: &EmbeddingModel,
    mix: &[MixRow],
    cfg: &FineTuneConfig,
) -> Result<FewShotHead> {
    let hash_before = embedding.param_hash();
    if !init.embedding_fingerprint.is_empty() && init.embedding_fingerprint != hash_before {
        return Err(Error::Training(format!(
            "head was initialized against embedding {} but got {}",
            &init.embedding_fingerprint[..12.min(init.embedding_fingerprint.len())],
            &hash_before[..12]
        )));
    }

    let specs: Vec<&Spectrogram> = mix.iter().map(|r| r.spec_ref()).collect();
    let mut features = Tensor::zeros(&[0, embedding.spec.embedding_units]);
    let mut all = Vec::with_capacity(mix.len() * embedding.spec.embedding_units);
    for chunk in specs.chunks(64) {
        let feats = embedding.extract_features(chunk)?;
        all.extend_from_slice(feats.data());
    }
    if !mix.is_empty() {
        features = Tensor::from_vec(&[mix.len(), embedding.spec.embedding_units], all)?;
    }
    let labels: Vec<HeadClass> = mix.iter().map(|r| r.label).collect();

    let mut head = fine_tune_features(init, &features, &labels, cfg)?;
    head.embedding_fingerprint = hash_before.clone();

    // the embedding is frozen: feature extraction and head training must
    // leave its parameters bitwise unchanged
    let hash_after = embedding.param_hash();
    assert_eq!(hash_before, hash_after, "embedding parameters changed during fine-tune");
    Ok(head)
}

impl MixRow {
    fn spec_ref(&self) -> &Spectrogram {
        &self.spec
    }
}

impl FewShotHead {
    /// Softmax scores over (target, unknown, background) for feature rows.
    pub fn scores(&self, features: &Tensor) -> Result<Tensor> {
        let logits = dense_forward(features, &self.weight, &self.bias)?;
        let n = logits.shape()[0];
        let mut data = Vec::with_capacity(n * 3);
        for row in logits.data().chunks(3) {
            let max = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
            let denom: f64 = row.iter().map(|&x| f64::from(x - max).exp()).sum();
            for &x in row {
                data.push((f64::from(x - max).exp() / denom) as f32);
            }
        }
        Tensor::from_vec(&[n, 3], data)
    }

    /// Target-class probability per spectrogram, batched through the
    /// embedding.
    pub fn target_scores(
        &self,
        embedding: &EmbeddingModel,
        specs: &[&Spectrogram],
    ) -> Result<Vec<f32>> {
        let mut out = Vec::with_capacity(specs.len());
        for chunk in specs.chunks(256) {
            let features = embedding.extract_features(chunk)?;
            let scores = self.scores(&features)?;
            out.extend(scores.data().chunks(3).map(|row| row[0]));
        }
        Ok(out)
    }

    pub fn save<P: AsRef<Path>>(&self, embedding: &EmbeddingModel, path: P) -> Result<()> {
        let header = ContainerHeader::FewshotHead(Box::new(FewshotHeader {
            target_word: self.target_word.clone(),
            language: self.language.clone(),
            class_order: HEAD_CLASSES.iter().map(|s| s.to_string()).collect(),
            embedding_fingerprint: self.embedding_fingerprint.clone(),
            shot_paths: self.shot_paths.clone(),
            frontend: embedding.frontend.clone(),
            embedding_units: embedding.spec.embedding_units,
        }));
        crate::model::write_container(
            path,
            &header,
            &[("head.weight", &self.weight), ("head.bias", &self.bias)],
        )
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<(Self, FewshotHeader)> {
        let (header, tensors) = crate::model::read_container(path)?;
        let header = match header {
            ContainerHeader::FewshotHead(h) => *h,
            ContainerHeader::Embedding(_) => {
                return Err(Error::ModelFormat(
                    "file holds an embedding model, not a few-shot head".into(),
                ))
            }
        };
        let mut weight = None;
        let mut bias = None;
        for (name, tensor) in tensors {
            match name.as_str() {
                "head.weight" => weight = Some(tensor),
                "head.bias" => bias = Some(tensor),
                other => return Err(Error::ModelFormat(format!("unexpected tensor {other}"))),
            }
        }
        let weight = weight.ok_or_else(|| Error::ModelFormat("missing head.weight".into()))?;
        let bias = bias.ok_or_else(|| Error::ModelFormat("missing head.bias".into()))?;
        Ok((
            Self {
                target_word: header.target_word.clone(),
                language: header.language.clone(),
                weight,
                bias,
                embedding_fingerprint: header.embedding_fingerprint.clone(),
                shot_paths: header.shot_paths.clone(),
            },
            header,
        ))
    }
}

/// Verify that a head file matches a loaded embedding model.
pub fn check_head_compatibility<P: AsRef<Path>>(
    head_path: P,
    embedding: &EmbeddingModel,
) -> Result<()> {
    let header = match read_header(head_path)? {
        ContainerHeader::FewshotHead(h) => *h,
        ContainerHeader::Embedding(_) => {
            return Err(Error::ModelFormat("expected a few-shot head file".into()))
        }
    };
    let hash = embedding.param_hash();
    if header.embedding_fingerprint != hash {
        return Err(Error::Training(format!(
            "head was fine-tuned against embedding {}..., but this embedding is {}...",
            &header.embedding_fingerprint[..12.min(header.embedding_fingerprint.len())],
            &hash[..12]
        )));
    }
    Ok(())
}

/// Classify one 1-second clip: softmax scores plus the threshold decision.
pub fn classify(
    head: &FewShotHead,
    embedding: &EmbeddingModel,
    clip: &AudioBuffer,
    threshold: f64,
) -> Result<([f32; 3], bool)> {
    if clip.len() != clip.sample_rate as usize {
        return Err(Error::Audio(format!(
            "classify expects a 1-second clip, got {} samples at {} Hz",
            clip.len(),
            clip.sample_rate
        )));
    }
    let extractor = SpectrogramExtractor::new(&embedding.frontend, DEFAULT_SAMPLE_RATE)?;
    let spec = extractor.compute(&clip.samples)?;
    let features = embedding.extract_features(&[&spec])?;
    let scores = head.scores(&features)?;
    let row = [scores.data()[0], scores.data()[1], scores.data()[2]];
    Ok((row, f64::from(row[0]) >= threshold))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ManifestEntry, PaddingMode, Split};
    use crate::model::{build_model, class_list, ConvStage, EmbeddingNetSpec};

    fn tiny_embedding() -> EmbeddingModel {
        let spec = EmbeddingNetSpec {
            trunk: vec![ConvStage { filters: 8, kernel: 3, stride: 2 }],
            dense_units: vec![],
            embedding_units: 16,
            num_classes: 3,
            input_frames: 49,
            input_bins: 40,
        };
        build_model(
            &spec,
            class_list(&["aa".into(), "bb".into()]),
            &Default::default(),
            4,
        )
        .unwrap()
    }

    fn gaussian_clusters(per_class: usize, dim: usize) -> (Tensor, Vec<HeadClass>) {
        // three well-separated clusters along different axes
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (c, label) in [HeadClass::Target, HeadClass::Unknown, HeadClass::Background]
            .iter()
            .enumerate()
        {
            for _ in 0..per_class {
                for d in 0..dim {
                    let center = if d % 3 == c { 4.0 } else { -1.0 };
                    data.push(center + rng.gen_range(-0.5..0.5));
                }
                labels.push(*label);
            }
        }
        (
            Tensor::from_vec(&[3 * per_class, dim], data).unwrap(),
            labels,
        )
    }

    #[test]
    fn default_counts_resolve_to_115_115_26() {
        let cfg = FineTuneConfig::default();
        assert_eq!(cfg.resolve_counts(), (115, 115, 26));
        assert_eq!(115 + 115 + 26, 256);
        cfg.validate().unwrap();
    }

    #[test]
    fn separable_features_reach_full_training_accuracy() {
        let (features, labels) = gaussian_clusters(40, 12);
        let init = FewShotHead {
            target_word: "w".into(),
            language: "syn".into(),
            weight: Tensor::zeros(&[12, 3]),
            bias: Tensor::zeros(&[3]),
            embedding_fingerprint: String::new(),
            shot_paths: vec![],
        };
        let cfg = FineTuneConfig {
            epochs: 200,
            batch_size: 40,
            total_samples: 120,
            seed: 1,
            ..FineTuneConfig::default()
        };
        let head = fine_tune_features(&init, &features, &labels, &cfg).unwrap();
        let scores = head.scores(&features).unwrap();
        let mut correct = 0;
        for (row, label) in scores.data().chunks(3).zip(&labels) {
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            if pred == *label as usize {
                correct += 1;
            }
        }
        assert_eq!(correct, labels.len(), "training accuracy must be 100%");
    }

    #[test]
    fn zero_epochs_returns_init() {
        let (features, labels) = gaussian_clusters(10, 8);
        let init = FewShotHead {
            target_word: "w".into(),
            language: "syn".into(),
            weight: Tensor::from_vec(&[8, 3], (0..24).map(|i| i as f32 * 0.01).collect()).unwrap(),
            bias: Tensor::from_vec(&[3], vec![0.1, 0.2, 0.3]).unwrap(),
            embedding_fingerprint: String::new(),
            shot_paths: vec![],
        };
        let cfg = FineTuneConfig { epochs: 0, batch_size: 30, total_samples: 30, ..Default::default() };
        let head = fine_tune_features(&init, &features, &labels, &cfg).unwrap();
        assert_eq!(head.weight, init.weight);
        assert_eq!(head.bias, init.bias);
    }

    #[test]
    fn scores_sum_to_one_and_threshold_endpoints() {
        let embedding = tiny_embedding();
        let head = new_head(&embedding, "word", "syn");
        let clip = AudioBuffer::silence(1.0, DEFAULT_SAMPLE_RATE);
        let (scores, at_zero) = classify(&head, &embedding, &clip, 0.0).unwrap();
        let sum: f64 = scores.iter().map(|&s| f64::from(s)).sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(at_zero, "threshold 0 accepts everything");
        let (_, above_one) = classify(&head, &embedding, &clip, 1.01).unwrap();
        assert!(!above_one, "threshold > 1 accepts nothing");
    }

    #[test]
    fn classify_rejects_wrong_duration() {
        let embedding = tiny_embedding();
        let head = new_head(&embedding, "word", "syn");
        let clip = AudioBuffer::silence(0.5, DEFAULT_SAMPLE_RATE);
        assert!(classify(&head, &embedding, &clip, 0.5).is_err());
    }

    #[test]
    fn scores_invariant_under_batch_duplication() {
        let embedding = tiny_embedding();
        let mut head = new_head(&embedding, "word", "syn");
        // arbitrary nonzero head so scores differ across inputs
        head.weight = Tensor::from_vec(&[16, 3], (0..48).map(|i| ((i % 7) as f32 - 3.0) * 0.2).collect()).unwrap();

        let extractor = SpectrogramExtractor::new(&embedding.frontend, DEFAULT_SAMPLE_RATE).unwrap();
        let mk = |freq: f64| {
            let samples: Vec<f32> = (0..16000)
                .map(|i| 0.5 * (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin() as f32)
                .collect();
            extractor.compute(&samples).unwrap()
        };
        let a = mk(500.0);
        let b = mk(1500.0);
        let single = head.target_scores(&embedding, &[&a, &b]).unwrap();
        let doubled = head.target_scores(&embedding, &[&a, &b, &a, &b]).unwrap();
        assert_eq!(single[..], doubled[..2]);
        assert_eq!(single[..], doubled[2..]);
    }

    #[test]
    fn head_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.mkws");
        let embedding = tiny_embedding();
        let mut head = new_head(&embedding, "word", "syn");
        head.shot_paths = (0..5).map(|i| format!("shots/{i}.wav")).collect();
        head.weight = Tensor::from_vec(&[16, 3], (0..48).map(|i| i as f32 * 0.5).collect()).unwrap();
        head.save(&embedding, &path).unwrap();

        let (back, header) = FewShotHead::load(&path).unwrap();
        assert_eq!(back, head);
        assert_eq!(header.class_order, vec!["target", "unknown", "background"]);
        assert_eq!(header.embedding_units, 16);
        check_head_compatibility(&path, &embedding).unwrap();
    }

    fn bank_of_tones(dir: &Path, words: &[(&str, f64)], per_word: usize) -> UnknownBank {
        let mut entries = Vec::new();
        for (word, freq) in words {
            std::fs::create_dir_all(dir.join("syn").join(word)).unwrap();
            for i in 0..per_word {
                let samples: Vec<f32> = (0..16000)
                    .map(|n| {
                        0.4 * (2.0 * std::f64::consts::PI * freq * n as f64 / 16000.0).sin() as f32
                    })
                    .collect();
                let buf = AudioBuffer::new(samples, DEFAULT_SAMPLE_RATE).unwrap();
                let rel = format!("syn/{word}/c{i:02}_0.wav");
                crate::audio::save_audio(&buf, dir.join(&rel)).unwrap();
                entries.push(ManifestEntry {
                    path: rel,
                    word: (*word).to_string(),
                    language: "syn".into(),
                    split: Split::Train,
                    padding_mode: PaddingMode::Silence,
                    flags: vec![],
                    clip_id: format!("c{i:02}"),
                });
            }
        }
        UnknownBank { entries }
    }

    fn five_shots(freq: f64) -> Vec<KeywordExtraction> {
        (0..5)
            .map(|i| {
                let samples: Vec<f32> = (0..16000)
                    .map(|n| {
                        let jitter = 1.0 + 0.01 * (i as f64 - 2.0);
                        0.5 * (2.0 * std::f64::consts::PI * freq * jitter * n as f64 / 16000.0).sin()
                            as f32
                    })
                    .collect();
                KeywordExtraction {
                    word: "target".into(),
                    language: "syn".into(),
                    clip_id: format!("shot{i}"),
                    window_start_s: 0.0,
                    window_end_s: 1.0,
                    padding_mode: PaddingMode::Silence,
                    cropped: false,
                    audio: AudioBuffer::new(samples, DEFAULT_SAMPLE_RATE).unwrap(),
                }
            })
            .collect()
    }

    fn white_noise(seed: u64) -> AudioBuffer {
        let mut state = seed | 1;
        let samples: Vec<f32> = (0..32000)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (((state >> 33) as f32 / (1u64 << 31) as f32) - 1.0) * 0.05
            })
            .collect();
        AudioBuffer::new(samples, DEFAULT_SAMPLE_RATE).unwrap()
    }

    #[test]
    fn mix_composition_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let bank = bank_of_tones(dir.path(), &[("unk1", 900.0), ("unk2", 1300.0), ("unk3", 2100.0)], 50);
        let shots = five_shots(500.0);
        let noise = vec![white_noise(3), white_noise(5)];
        let extractor = SpectrogramExtractor::new(&Default::default(), DEFAULT_SAMPLE_RATE).unwrap();
        let cfg = FineTuneConfig { seed: 9, ..Default::default() };

        let mix = build_training_mix(
            &shots,
            &bank,
            dir.path(),
            &noise,
            &extractor,
            &AugmentConfig::default(),
            &cfg,
        )
        .unwrap();

        assert_eq!(mix.len(), 256);
        let count = |class: HeadClass| mix.iter().filter(|r| r.label == class).count();
        assert_eq!(count(HeadClass::Target), 115);
        assert_eq!(count(HeadClass::Unknown), 115);
        assert_eq!(count(HeadClass::Background), 26);

        // every target row links back to one of the five shots
        for row in mix.iter().filter(|r| r.label == HeadClass::Target) {
            match row.provenance {
                MixProvenance::Shot(i) => assert!(i < 5),
                ref other => panic!("target row has provenance {other:?}"),
            }
        }
        // unknown rows draw from at most unknown_draw distinct bank entries
        let distinct: std::collections::BTreeSet<usize> = mix
            .iter()
            .filter_map(|r| match r.provenance {
                MixProvenance::Bank(i) => Some(i),
                _ => None,
            })
            .collect();
        assert!(distinct.len() <= cfg.unknown_draw);
        for &i in &distinct {
            assert_ne!(bank.entries[i].word, "target");
        }

        let mix2 = build_training_mix(
            &shots,
            &bank,
            dir.path(),
            &noise,
            &extractor,
            &AugmentConfig::default(),
            &cfg,
        )
        .unwrap();
        for (a, b) in mix.iter().zip(&mix2) {
            assert_eq!(a.spec, b.spec);
            assert_eq!(a.label, b.label);
            assert_eq!(a.provenance, b.provenance);
        }
    }

    #[test]
    fn small_bank_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let bank = bank_of_tones(dir.path(), &[("unk1", 900.0)], 20);
        let shots = five_shots(500.0);
        let noise = vec![white_noise(3)];
        let extractor = SpectrogramExtractor::new(&Default::default(), DEFAULT_SAMPLE_RATE).unwrap();
        let err = build_training_mix(
            &shots,
            &bank,
            dir.path(),
            &noise,
            &extractor,
            &AugmentConfig::default(),
            &FineTuneConfig::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("bank"), "{err}");
    }

    #[test]
    fn fine_tune_freezes_embedding_and_learns_shots() {
        let dir = tempfile::tempdir().unwrap();
        let bank = bank_of_tones(dir.path(), &[("unk1", 1300.0), ("unk2", 2400.0), ("unk3", 3200.0)], 50);
        let shots = five_shots(500.0);
        let noise = vec![white_noise(3), white_noise(5)];
        let embedding = tiny_embedding();
        let extractor = SpectrogramExtractor::new(&embedding.frontend, DEFAULT_SAMPLE_RATE).unwrap();
        let cfg = FineTuneConfig { seed: 4, epochs: 40, ..Default::default() };

        let mix = build_training_mix(
            &shots,
            &bank,
            dir.path(),
            &noise,
            &extractor,
            &AugmentConfig::default(),
            &cfg,
        )
        .unwrap();

        let hash_before = embedding.param_hash();
        let init = new_head(&embedding, "target", "syn");
        let head = fine_tune(&init, &embedding, &mix, &cfg).unwrap();
        assert_eq!(embedding.param_hash(), hash_before, "freeze invariant");

        // a training shot should score above the uniform 1/3 on target
        let (scores, _) = classify(&head, &embedding, &shots[0].audio, 0.5).unwrap();
        assert!(
            scores[0] > 1.0 / 3.0,
            "target score {} should exceed uniform after fine-tuning",
            scores[0]
        );

        // determinism
        let head2 = fine_tune(&init, &embedding, &mix, &cfg).unwrap();
        assert_eq!(head, head2);
    }
}
