//! Embedding-model training loop: augmented keyword batches with a
//! background-noise fraction, per-epoch validation, and best-epoch
//! checkpoint selection.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{load_audio, AudioBuffer, Spectrogram, SpectrogramExtractor, DEFAULT_SAMPLE_RATE};
use crate::augment::{augment_waveform, spec_augment_rng, AugmentConfig};
use crate::dataset::{DatasetManifest, ManifestEntry, PaddingMode, Split};
use crate::error::{Error, Result};
use crate::fingerprint::{sha256_hex, stable_hash64, HashWriter};
use crate::model::{EmbeddingModel, TrainingFingerprint};
use crate::nn::{softmax_xent_backward, softmax_xent_forward, Adam};

/// Which padding variants participate in training. With both variants each
/// keyword occurrence contributes its silence- and context-padded clip,
/// doubling the epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingVariant {
    SilenceOnly,
    SilenceAndContext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    /// Fraction of training rows replaced by pure noise labeled as
    /// background, realized per-row Bernoulli.
    pub noise_fraction: f64,
    pub augment: AugmentConfig,
    pub seed: u64,
    pub padding_variant: PaddingVariant,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.001,
            noise_fraction: 0.10,
            augment: AugmentConfig::default(),
            seed: 0,
            padding_variant: PaddingVariant::SilenceOnly,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.noise_fraction) {
            return Err(Error::Config("noise_fraction must be in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        self.augment.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageAccuracy {
    pub language: String,
    pub samples: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationTable {
    pub rows: Vec<LanguageAccuracy>,
    pub overall_samples: usize,
    pub overall_correct: usize,
    pub overall_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epoch_loss: Vec<f64>,
    pub epoch_train_accuracy: Vec<f64>,
    pub epoch_val_accuracy: Vec<f64>,
    pub best_epoch: usize,
    pub validation: ValidationTable,
}

impl TrainingReport {
    /// Per-epoch CSV: epoch,loss,train_accuracy,val_accuracy.
    pub fn write_epochs_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["epoch", "loss", "train_accuracy", "val_accuracy"])?;
        for (i, loss) in self.epoch_loss.iter().enumerate() {
            w.write_record([
                i.to_string(),
                loss.to_string(),
                self.epoch_train_accuracy[i].to_string(),
                self.epoch_val_accuracy[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-language CSV: language,samples,correct,accuracy then an overall row.
    pub fn write_validation_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["language", "samples", "correct", "accuracy"])?;
        for row in &self.validation.rows {
            w.write_record([
                row.language.clone(),
                row.samples.to_string(),
                row.correct.to_string(),
                row.accuracy.to_string(),
            ])?;
        }
        w.write_record([
            "overall".to_string(),
            self.validation.overall_samples.to_string(),
            self.validation.overall_correct.to_string(),
            self.validation.overall_accuracy.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// Load every WAV in a directory, sorted by file name.
pub fn load_noise_dir<P: AsRef<Path>>(dir: P) -> Result<Vec<AudioBuffer>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir.as_ref())?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "wav").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Dataset(format!(
            "no wav files in noise directory {}",
            dir.as_ref().display()
        )));
    }
    paths.iter().map(load_audio).collect()
}

/// A random 1-second crop of a noise file (wrapping if short).
pub fn noise_crop(noise: &[AudioBuffer], rng: &mut ChaCha8Rng) -> AudioBuffer {
    let src = &noise[rng.gen_range(0..noise.len())];
    let n = DEFAULT_SAMPLE_RATE as usize;
    let offset = rng.gen_range(0..src.len().max(1));
    let samples = (0..n).map(|i| src.samples[(offset + i) % src.len()]).collect();
    AudioBuffer {
        samples,
        sample_rate: DEFAULT_SAMPLE_RATE,
    }
}

/// A background-class training row: a noise crop scaled by a random
/// volume in [0, 1], with a slice of rows fully silent, so the background
/// class covers everything from silence up to full-level noise.
pub fn background_crop(noise: &[AudioBuffer], rng: &mut ChaCha8Rng) -> AudioBuffer {
    let mut crop = noise_crop(noise, rng);
    let volume: f32 = rng.gen_range(0.0..=1.0);
    let volume = if volume < 0.1 { 0.0 } else { volume };
    for s in &mut crop.samples {
        *s *= volume;
    }
    crop
}

fn entry_matches_variant(entry: &ManifestEntry, variant: PaddingVariant) -> bool {
    match variant {
        PaddingVariant::SilenceOnly => entry.padding_mode == PaddingMode::Silence,
        PaddingVariant::SilenceAndContext => true,
    }
}

struct LoadedSplit {
    entries: Vec<ManifestEntry>,
    clips: Vec<AudioBuffer>,
    labels: Vec<usize>,
}

fn load_split(
    manifest: &DatasetManifest,
    split: Split,
    variant: PaddingVariant,
    clip_root: &Path,
    model: &EmbeddingModel,
) -> Result<LoadedSplit> {
    let mut entries = Vec::new();
    let mut clips = Vec::new();
    let mut labels = Vec::new();
    for entry in manifest.split(split) {
        if !entry_matches_variant(entry, variant) {
            continue;
        }
        let label = model.class_index(&entry.word).ok_or_else(|| {
            Error::Training(format!("word {:?} is not in the model class list", entry.word))
        })?;
        let clip = load_audio(clip_root.join(&entry.path))?;
        entries.push(entry.clone());
        clips.push(clip);
        labels.push(label);
    }
    Ok(LoadedSplit { entries, clips, labels })
}

fn manifest_hash(manifest: &DatasetManifest) -> Result<String> {
    let mut hasher = HashWriter::new();
    for entry in &manifest.entries {
        hasher.update(&serde_json::to_vec(entry)?);
        hasher.update(b"\n");
    }
    Ok(hasher.finish_hex())
}

/// Train the classifier on the manifest's train split and keep the best
/// validation checkpoint. Per batch, `noise_fraction` of rows are replaced
/// by pure-noise crops labeled background; the rest are augmented keyword
/// clips. Deterministic per (config, manifest, clips).
pub fn train_embedding(
    model: &mut EmbeddingModel,
    manifest: &DatasetManifest,
    clip_root: &Path,
    noise: &[AudioBuffer],
    cfg: &TrainingConfig,
) -> Result<TrainingReport> {
    cfg.validate()?;
    if cfg.noise_fraction > 0.0 && noise.is_empty() {
        return Err(Error::Training(
            "noise_fraction > 0 but no noise clips supplied".into(),
        ));
    }
    let train = load_split(manifest, Split::Train, cfg.padding_variant, clip_root, model)?;
    if train.entries.is_empty() {
        return Err(Error::Training("manifest train split is empty".into()));
    }
    let val = load_split(manifest, Split::Val, cfg.padding_variant, clip_root, model)?;

    let extractor = SpectrogramExtractor::new(&model.frontend, DEFAULT_SAMPLE_RATE)?;
    let val_specs: Vec<Spectrogram> = val
        .clips
        .iter()
        .map(|c| extractor.compute(&c.samples))
        .collect::<Result<_>>()?;

    let mut adam = Adam::new(cfg.learning_rate);
    let mut report = TrainingReport {
        epoch_loss: Vec::with_capacity(cfg.epochs),
        epoch_train_accuracy: Vec::with_capacity(cfg.epochs),
        epoch_val_accuracy: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        validation: ValidationTable {
            rows: vec![],
            overall_samples: 0,
            overall_correct: 0,
            overall_accuracy: 0.0,
        },
    };
    let mut best = (f64::NEG_INFINITY, model.snapshot());

    for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..train.entries.len()).collect();
        let mut epoch_rng =
            ChaCha8Rng::seed_from_u64(stable_hash64(cfg.seed, &[b"epoch", &(epoch as u64).to_le_bytes()]));
        order.shuffle(&mut epoch_rng);

        let mut loss_sum = 0.0f64;
        let mut loss_rows = 0usize;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut specs = Vec::with_capacity(batch.len());
            let mut labels = Vec::with_capacity(batch.len());
            for &row in batch {
                let mut rng = ChaCha8Rng::seed_from_u64(stable_hash64(
                    cfg.seed,
                    &[b"row", &(epoch as u64).to_le_bytes(), &(row as u64).to_le_bytes()],
                ));
                if cfg.noise_fraction > 0.0 && rng.gen_bool(cfg.noise_fraction) {
                    let crop = background_crop(noise, &mut rng);
                    specs.push(extractor.compute(&crop.samples)?);
                    labels.push(0); // background
                } else {
                    let noise_clip = if noise.is_empty() {
                        None
                    } else {
                        Some(&noise[rng.gen_range(0..noise.len())])
                    };
                    let wav = augment_waveform(&train.clips[row], noise_clip, &cfg.augment, &mut rng)?;
                    let spec = extractor.compute(&wav.samples)?;
                    specs.push(spec_augment_rng(&spec, &cfg.augment, &mut rng));
                    labels.push(train.labels[row]);
                }
            }
            let spec_refs: Vec<&Spectrogram> = specs.iter().collect();
            let input = model.input_tensor(&spec_refs)?;
            let tape = model.forward_tape(input)?;
            let logits = tape.last().expect("non-empty tape");
            let fwd = softmax_xent_forward(logits, &labels)?;
            if !fwd.loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss at epoch {epoch}; try a lower learning rate"
                )));
            }
            let k = model.spec.num_classes;
            for (i, &label) in labels.iter().enumerate() {
                let row = &fwd.probs.data()[i * k..(i + 1) * k];
                let pred = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite probs"))
                    .map(|(j, _)| j)
                    .expect("non-empty row");
                if pred == label {
                    correct += 1;
                }
            }
            loss_sum += fwd.loss * batch.len() as f64;
            loss_rows += batch.len();

            let grad = softmax_xent_backward(&fwd.probs, &labels);
            model.zero_grads();
            model.backward_tape(&tape, grad)?;
            adam.step(&mut model.parameters_mut())?;
        }

        let epoch_loss = loss_sum / loss_rows as f64;
        let train_acc = correct as f64 / loss_rows as f64;

        let val_acc = if val_specs.is_empty() {
            0.0
        } else {
            let mut correct = 0usize;
            for (chunk, labels) in val_specs
                .chunks(cfg.batch_size)
                .zip(val.labels.chunks(cfg.batch_size))
            {
                let refs: Vec<&Spectrogram> = chunk.iter().collect();
                let preds = model.predict(&refs)?;
                correct += preds.iter().zip(labels).filter(|(p, l)| p == l).count();
            }
            correct as f64 / val_specs.len() as f64
        };

        report.epoch_loss.push(epoch_loss);
        report.epoch_train_accuracy.push(train_acc);
        report.epoch_val_accuracy.push(val_acc);
        // ties go to the later epoch: accuracy saturates early on easy
        // corpora while feature margins keep improving
        if val_acc >= best.0 {
            best = (val_acc, model.snapshot());
            report.best_epoch = epoch;
        }
    }

    model.restore(&best.1);
    report.validation = validate_loaded(model, &val, &val_specs, cfg.batch_size)?;
    model.fingerprint = TrainingFingerprint {
        config_hash: sha256_hex(&serde_json::to_vec(cfg)?),
        data_hash: manifest_hash(manifest)?,
    };
    Ok(report)
}

fn validate_loaded(
    model: &EmbeddingModel,
    split: &LoadedSplit,
    specs: &[Spectrogram],
    batch_size: usize,
) -> Result<ValidationTable> {
    let mut per_language: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut overall = (0usize, 0usize);
    let mut offset = 0;
    for chunk in specs.chunks(batch_size.max(1)) {
        let refs: Vec<&Spectrogram> = chunk.iter().collect();
        let preds = model.predict(&refs)?;
        for (i, pred) in preds.iter().enumerate() {
            let entry = &split.entries[offset + i];
            let stats = per_language.entry(entry.language.clone()).or_insert((0, 0));
            stats.0 += 1;
            overall.0 += 1;
            if *pred == split.labels[offset + i] {
                stats.1 += 1;
                overall.1 += 1;
            }
        }
        offset += chunk.len();
    }
    let rows = per_language
        .into_iter()
        .map(|(language, (samples, correct))| LanguageAccuracy {
            language,
            samples,
            correct,
            accuracy: if samples == 0 { 0.0 } else { correct as f64 / samples as f64 },
        })
        .collect();
    Ok(ValidationTable {
        rows,
        overall_samples: overall.0,
        overall_correct: overall.1,
        overall_accuracy: if overall.0 == 0 {
            0.0
        } else {
            overall.1 as f64 / overall.0 as f64
        },
    })
}

/// Top-1 accuracy per language (and overall) on one manifest split.
pub fn validate(
    model: &EmbeddingModel,
    manifest: &DatasetManifest,
    split: Split,
    clip_root: &Path,
) -> Result<ValidationTable> {
    let loaded = load_split(manifest, split, PaddingVariant::SilenceAndContext, clip_root, model)?;
    if loaded.entries.is_empty() {
        return Err(Error::Eval(format!("split {split:?} is empty")));
    }
    let extractor = SpectrogramExtractor::new(&model.frontend, DEFAULT_SAMPLE_RATE)?;
    let specs: Vec<Spectrogram> = loaded
        .clips
        .iter()
        .map(|c| extractor.compute(&c.samples))
        .collect::<Result<_>>()?;
    validate_loaded(model, &loaded, &specs, 64)
}

/// Plain classifier training on precomputed spectrograms, used by the
/// cross-dataset microbenchmark and tests. No augmentation, no noise rows.
pub(crate) fn train_on_specs(
    model: &mut EmbeddingModel,
    data: &[(&Spectrogram, usize)],
    epochs: usize,
    batch_size: usize,
    learning_rate: f32,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut adam = Adam::new(learning_rate);
    let mut losses = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut rng =
            ChaCha8Rng::seed_from_u64(stable_hash64(seed, &[b"spec-epoch", &(epoch as u64).to_le_bytes()]));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut rows = 0;
        for batch in order.chunks(batch_size) {
            let specs: Vec<&Spectrogram> = batch.iter().map(|&i| data[i].0).collect();
            let labels: Vec<usize> = batch.iter().map(|&i| data[i].1).collect();
            let input = model.input_tensor(&specs)?;
            let tape = model.forward_tape(input)?;
            let fwd = softmax_xent_forward(tape.last().expect("non-empty tape"), &labels)?;
            let grad = softmax_xent_backward(&fwd.probs, &labels);
            model.zero_grads();
            model.backward_tape(&tape, grad)?;
            adam.step(&mut model.parameters_mut())?;
            loss_sum += fwd.loss * batch.len() as f64;
            rows += batch.len();
        }
        losses.push(loss_sum / rows as f64);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::save_audio;
    use crate::dataset::build_manifest;
    use crate::model::{build_model, class_list, ConvStage, EmbeddingNetSpec};

    /// Tiny separable corpus: 3 tone keywords, written as real files.
    fn write_tone_corpus(
        dir: &Path,
        words: &[(&str, f64)],
        per_word: usize,
    ) -> (DatasetManifest, Vec<AudioBuffer>) {
        let mut entries = Vec::new();
        for (word, freq) in words {
            std::fs::create_dir_all(dir.join("syn").join(word)).unwrap();
            for i in 0..per_word {
                // light per-sample jitter keeps the task non-trivial
                let jitter = 1.0 + 0.02 * ((i % 7) as f64 - 3.0) / 3.0;
                let amp = 0.3 + 0.3 * ((i % 5) as f32) / 5.0;
                let samples: Vec<f32> = (0..16000)
                    .map(|n| {
                        amp * (2.0 * std::f64::consts::PI * freq * jitter * n as f64 / 16000.0).sin()
                            as f32
                    })
                    .collect();
                let buf = AudioBuffer::new(samples, DEFAULT_SAMPLE_RATE).unwrap();
                let rel = format!("syn/{word}/c{i:03}_0.wav");
                save_audio(&buf, dir.join(&rel)).unwrap();
                entries.push(ManifestEntry {
                    path: rel,
                    word: (*word).into(),
                    language: "syn".into(),
                    split: Split::Train,
                    padding_mode: PaddingMode::Silence,
                    flags: vec![],
                    clip_id: format!("c{i:03}"),
                });
            }
        }
        let manifest = build_manifest(entries, (0.8, 0.1, 0.1), 11).unwrap().manifest;
        let noise: Vec<AudioBuffer> = (0..2)
            .map(|k| {
                let mut state = 7u64 + k;
                let samples: Vec<f32> = (0..32000)
                    .map(|_| {
                        state = state
                            .wrapping_mul(6364136223846793005)
                            .wrapping_add(1442695040888963407);
                        (((state >> 33) as f32 / (1u64 << 31) as f32) - 1.0) * 0.05
                    })
                    .collect();
                AudioBuffer::new(samples, DEFAULT_SAMPLE_RATE).unwrap()
            })
            .collect();
        (manifest, noise)
    }

    fn small_spec(num_keywords: usize) -> EmbeddingNetSpec {
        EmbeddingNetSpec {
            trunk: vec![
                ConvStage { filters: 8, kernel: 3, stride: 2 },
                ConvStage { filters: 16, kernel: 3, stride: 2 },
            ],
            dense_units: vec![32],
            embedding_units: 16,
            num_classes: num_keywords + 1,
            input_frames: 49,
            input_bins: 40,
        }
    }

    #[test]
    fn training_learns_separable_tones_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let words = [("low", 400.0), ("mid", 1100.0), ("high", 2600.0)];
        let (manifest, noise) = write_tone_corpus(dir.path(), &words, 40);
        let classes = class_list(&manifest.words().into_iter().collect::<Vec<_>>());
        let spec = small_spec(3);
        let cfg = TrainingConfig {
            epochs: 30,
            batch_size: 32,
            seed: 5,
            ..TrainingConfig::default()
        };

        let mut model = build_model(&spec, classes.clone(), &Default::default(), 5).unwrap();
        let report = train_embedding(&mut model, &manifest, dir.path(), &noise, &cfg).unwrap();
        assert!(
            report.validation.overall_accuracy >= 0.9,
            "val accuracy {}",
            report.validation.overall_accuracy
        );
        // loss should not increase over the first 5 epochs on this corpus
        for i in 0..4 {
            assert!(
                report.epoch_loss[i + 1] <= report.epoch_loss[i],
                "loss rose at epoch {}: {:?}",
                i + 1,
                &report.epoch_loss[..5]
            );
        }

        let mut model2 = build_model(&spec, classes, &Default::default(), 5).unwrap();
        let report2 = train_embedding(&mut model2, &manifest, dir.path(), &noise, &cfg).unwrap();
        assert_eq!(report.epoch_loss, report2.epoch_loss, "loss sequences must match");
        assert_eq!(model.param_hash(), model2.param_hash(), "weights must match");
        assert_eq!(model.fingerprint, model2.fingerprint);
    }

    #[test]
    fn validation_table_matches_confusion_recount() {
        let dir = tempfile::tempdir().unwrap();
        let words = [("aaa", 500.0), ("bbb", 1600.0)];
        let (manifest, noise) = write_tone_corpus(dir.path(), &words, 20);
        let classes = class_list(&manifest.words().into_iter().collect::<Vec<_>>());
        let mut model = build_model(&small_spec(2), classes, &Default::default(), 3).unwrap();
        let cfg = TrainingConfig { epochs: 25, batch_size: 16, seed: 9, ..Default::default() };
        train_embedding(&mut model, &manifest, dir.path(), &noise, &cfg).unwrap();

        let table = validate(&model, &manifest, Split::Val, dir.path()).unwrap();

        // independent recount, one clip at a time
        let extractor = SpectrogramExtractor::new(&model.frontend, DEFAULT_SAMPLE_RATE).unwrap();
        let mut correct = 0;
        let mut total = 0;
        for entry in manifest.split(Split::Val) {
            let clip = load_audio(dir.path().join(&entry.path)).unwrap();
            let spec = extractor.compute(&clip.samples).unwrap();
            let pred = model.predict(&[&spec]).unwrap()[0];
            total += 1;
            if model.classes[pred] == entry.word {
                correct += 1;
            }
        }
        assert_eq!(table.overall_samples, total);
        assert_eq!(table.overall_correct, correct);
        let expect = correct as f64 / total as f64;
        assert!((table.overall_accuracy - expect).abs() < 1e-12);
    }

    #[test]
    fn missing_noise_with_noise_fraction_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, _) = write_tone_corpus(dir.path(), &[("one", 700.0), ("two", 1900.0)], 10);
        let classes = class_list(&manifest.words().into_iter().collect::<Vec<_>>());
        let mut model = build_model(&small_spec(2), classes, &Default::default(), 1).unwrap();
        let cfg = TrainingConfig { epochs: 1, ..Default::default() };
        let err = train_embedding(&mut model, &manifest, dir.path(), &[], &cfg).unwrap_err();
        assert!(err.to_string().contains("noise"), "{err}");
    }

    #[test]
    fn unknown_word_in_manifest_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (manifest, noise) = write_tone_corpus(dir.path(), &[("one", 700.0), ("two", 1900.0)], 10);
        // model only knows "one"
        let classes = class_list(&["one".to_string()]);
        let mut model = build_model(&small_spec(1), classes, &Default::default(), 1).unwrap();
        let cfg = TrainingConfig { epochs: 1, ..Default::default() };
        let err = train_embedding(&mut model, &manifest, dir.path(), &noise, &cfg).unwrap_err();
        assert!(err.to_string().contains("class list"), "{err}");
    }

    #[test]
    fn fingerprints_track_config_and_data_changes() {
        let cfg_a = TrainingConfig::default();
        let cfg_b = TrainingConfig { epochs: cfg_a.epochs + 1, ..TrainingConfig::default() };
        let hash = |cfg: &TrainingConfig| sha256_hex(&serde_json::to_vec(cfg).unwrap());
        assert_eq!(hash(&cfg_a), hash(&cfg_a));
        assert_ne!(hash(&cfg_a), hash(&cfg_b), "config change must change the hash");

        let manifest_a = DatasetManifest {
            entries: vec![ManifestEntry {
                path: "syn/w/c1_0.wav".into(),
                word: "w".into(),
                language: "syn".into(),
                split: Split::Train,
                padding_mode: PaddingMode::Silence,
                flags: vec![],
                clip_id: "c1".into(),
            }],
        };
        let mut manifest_b = manifest_a.clone();
        manifest_b.entries[0].split = Split::Val;
        assert_eq!(manifest_hash(&manifest_a).unwrap(), manifest_hash(&manifest_a).unwrap());
        assert_ne!(
            manifest_hash(&manifest_a).unwrap(),
            manifest_hash(&manifest_b).unwrap(),
            "data change must change the hash"
        );
    }

    #[test]
    fn noise_rows_hit_expected_fraction() {
        // per-row Bernoulli(0.1): expected 6.4 noise rows in a batch of 64
        let mut noise_rows = 0usize;
        let total_rows = 64 * 200;
        for row in 0..total_rows {
            let mut rng = ChaCha8Rng::seed_from_u64(stable_hash64(
                99,
                &[b"row", &0u64.to_le_bytes(), &(row as u64).to_le_bytes()],
            ));
            if rng.gen_bool(0.10) {
                noise_rows += 1;
            }
        }
        let mean_per_batch = noise_rows as f64 / 200.0;
        assert!(
            (mean_per_batch - 6.4).abs() < 0.6,
            "mean noise rows per 64-batch = {mean_per_batch}"
        );
    }
}

