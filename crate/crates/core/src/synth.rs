//! Procedural keyword corpus for desk-scale experiments.
//!
//! Each synthetic "keyword" is a three-segment multi-tone template with a
//! private set of grid frequencies; per-sample pitch/tempo/amplitude
//! jitter emulates speaker variation. Every sample is written as a source
//! clip with the word embedded in a quiet noise bed plus an alignment row,
//! so the real extraction pipeline runs unchanged on generated data.

use std::f64::consts::PI;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{save_audio, AudioBuffer, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::fingerprint::stable_hash64;

const NATO: [&str; 26] = [
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliett",
    "kilo", "lima", "mike", "november", "oscar", "papa", "quebec", "romeo", "sierra", "tango",
    "uniform", "victor", "whiskey", "xray", "yankee", "zulu",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_keywords: usize,
    pub samples_per_keyword: usize,
    /// Length of each generated source clip.
    pub clip_duration_s: f64,
    pub noise_files: usize,
    pub noise_duration_s: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_keywords: 8,
            samples_per_keyword: 200,
            clip_duration_s: 2.5,
            noise_files: 4,
            noise_duration_s: 30.0,
            seed: 0,
        }
    }
}

/// Deterministic keyword names: the spelling alphabet, then kw26, kw27...
pub fn keyword_names(n: usize) -> Vec<String> {
    (0..n)
        .map(|i| {
            if i < NATO.len() {
                NATO[i].to_string()
            } else {
                format!("kw{i:02}")
            }
        })
        .collect()
}

/// A keyword's tonal signature: three base frequencies and segment length.
#[derive(Debug, Clone, PartialEq)]
pub struct KeywordTemplate {
    pub word: String,
    pub segment_hz: [f64; 3],
    pub segment_s: f64,
}

/// Per-keyword frequency codes. A seeded permutation of a log-spaced grid
/// gives every keyword three private frequencies, so templates are
/// pairwise distinguishable by construction.
pub fn keyword_templates(cfg: &SynthConfig) -> Vec<KeywordTemplate> {
    let names = keyword_names(cfg.num_keywords);
    let grid_len = (3 * cfg.num_keywords).max(12);
    let lo = 300.0f64;
    let hi = 3400.0f64;
    let grid: Vec<f64> = (0..grid_len)
        .map(|i| lo * (hi / lo).powf(i as f64 / (grid_len - 1).max(1) as f64))
        .collect();
    let mut order: Vec<usize> = (0..grid_len).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash64(cfg.seed, &[b"templates"]));
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng);

    names
        .into_iter()
        .enumerate()
        .map(|(k, word)| KeywordTemplate {
            word,
            segment_hz: [
                grid[order[3 * k]],
                grid[order[3 * k + 1]],
                grid[order[3 * k + 2]],
            ],
            segment_s: 0.16,
        })
        .collect()
}

fn render_tone_word(
    template: &KeywordTemplate,
    pitch: f64,
    tempos: [f64; 3],
    amplitude: f32,
) -> Vec<f32> {
    let sr = f64::from(DEFAULT_SAMPLE_RATE);
    let ramp_s = 0.008;
    let mut samples = Vec::new();
    for (seg, &base_hz) in template.segment_hz.iter().enumerate() {
        let seg_len = (template.segment_s * tempos[seg] * sr).round() as usize;
        let freq = base_hz * pitch;
        let ramp = (ramp_s * sr) as usize;
        for i in 0..seg_len {
            let t = i as f64 / sr;
            let tone = (2.0 * PI * freq * t).sin() + 0.35 * (4.0 * PI * freq * t).sin();
            let env = if i < ramp {
                0.5 * (1.0 - (PI * i as f64 / ramp as f64).cos())
            } else if i + ramp > seg_len {
                0.5 * (1.0 - (PI * (seg_len - i) as f64 / ramp as f64).cos())
            } else {
                1.0
            };
            samples.push((tone * env) as f32 * amplitude * 0.6);
        }
    }
    samples
}

/// The clean (jitter-free, unit-tempo) waveform of keyword `k`.
pub fn clean_template(cfg: &SynthConfig, k: usize) -> AudioBuffer {
    let templates = keyword_templates(cfg);
    let samples = render_tone_word(&templates[k], 1.0, [1.0; 3], 0.8);
    AudioBuffer {
        samples,
        sample_rate: DEFAULT_SAMPLE_RATE,
    }
}

/// One jittered utterance of keyword `k`. Deterministic per
/// (seed, k, sample index).
pub fn synth_utterance(
    cfg: &SynthConfig,
    templates: &[KeywordTemplate],
    k: usize,
    sample: usize,
) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash64(
        cfg.seed,
        &[b"utterance", &(k as u64).to_le_bytes(), &(sample as u64).to_le_bytes()],
    ));
    let pitch = rng.gen_range(0.96..1.04);
    let tempos = [
        rng.gen_range(0.90..1.10),
        rng.gen_range(0.90..1.10),
        rng.gen_range(0.90..1.10),
    ];
    let amplitude = rng.gen_range(0.3..0.9);
    render_tone_word(&templates[k], pitch, tempos, amplitude)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSummary {
    pub keywords: Vec<String>,
    pub clip_count: usize,
    pub clips_dir: PathBuf,
    pub noise_dir: PathBuf,
    pub alignments_path: PathBuf,
}

/// Generate the corpus on disk: `clips/<clip_id>.wav` source clips with a
/// faint noise bed, `alignments.csv` with the word spans, and a `noise/`
/// directory of background files.
pub fn generate_corpus(cfg: &SynthConfig, out_dir: &Path) -> Result<SynthSummary> {
    if cfg.num_keywords == 0 || cfg.samples_per_keyword == 0 {
        return Err(Error::Config("corpus must have keywords and samples".into()));
    }
    let templates = keyword_templates(cfg);
    let word_max_s = 3.0 * 0.16 * 1.10 + 0.05;
    if cfg.clip_duration_s < word_max_s + 0.6 {
        return Err(Error::Config(format!(
            "clip_duration_s {} too short for a {word_max_s:.2} s word plus margins",
            cfg.clip_duration_s
        )));
    }

    let clips_dir = out_dir.join("clips");
    let noise_dir = out_dir.join("noise");
    std::fs::create_dir_all(&clips_dir)?;
    std::fs::create_dir_all(&noise_dir)?;
    let alignments_path = out_dir.join("alignments.csv");
    let mut csv = std::fs::File::create(&alignments_path)?;
    writeln!(csv, "clip_id,word,start_s,end_s")?;

    let sr = f64::from(DEFAULT_SAMPLE_RATE);
    let clip_len = (cfg.clip_duration_s * sr).round() as usize;
    let mut clip_count = 0usize;
    for (k, template) in templates.iter().enumerate() {
        for sample in 0..cfg.samples_per_keyword {
            let word = synth_utterance(cfg, &templates, k, sample);
            let mut rng = ChaCha8Rng::seed_from_u64(stable_hash64(
                cfg.seed,
                &[b"clip", &(k as u64).to_le_bytes(), &(sample as u64).to_le_bytes()],
            ));
            // quiet noise bed so context padding differs from silence
            let mut samples: Vec<f32> = (0..clip_len)
                .map(|_| (rng.gen_range(-1.0f32..1.0)) * 0.004)
                .collect();
            let max_onset = clip_len - word.len() - (0.3 * sr) as usize;
            let onset = rng.gen_range((0.3 * sr) as usize..max_onset);
            for (i, &w) in word.iter().enumerate() {
                samples[onset + i] = (samples[onset + i] + w).clamp(-1.0, 1.0);
            }
            let clip_id = format!("c{k:02}s{sample:04}");
            let start_s = onset as f64 / sr;
            let end_s = (onset + word.len()) as f64 / sr;
            save_audio(
                &AudioBuffer { samples, sample_rate: DEFAULT_SAMPLE_RATE },
                clips_dir.join(format!("{clip_id}.wav")),
            )?;
            writeln!(csv, "{clip_id},{},{start_s:.6},{end_s:.6}", template.word)?;
            clip_count += 1;
        }
    }

    for n in 0..cfg.noise_files {
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash64(
            cfg.seed,
            &[b"noise", &(n as u64).to_le_bytes()],
        ));
        let len = (cfg.noise_duration_s * sr).round() as usize;
        let samples: Vec<f32> = if n % 2 == 0 {
            (0..len).map(|_| rng.gen_range(-1.0f32..1.0) * 0.06).collect()
        } else {
            // drifting tone cluster, a crude stand-in for ambient hum
            let f1 = rng.gen_range(80.0..200.0);
            let f2 = rng.gen_range(200.0..500.0);
            (0..len)
                .map(|i| {
                    let t = i as f64 / sr;
                    let drift = 1.0 + 0.05 * (2.0 * PI * 0.1 * t).sin();
                    (0.04 * (2.0 * PI * f1 * drift * t).sin()
                        + 0.03 * (2.0 * PI * f2 * t).sin()
                        + f64::from(rng.gen_range(-1.0f32..1.0)) * 0.02) as f32
                })
                .collect()
        };
        save_audio(
            &AudioBuffer { samples, sample_rate: DEFAULT_SAMPLE_RATE },
            noise_dir.join(format!("noise_{n:02}.wav")),
        )?;
    }

    Ok(SynthSummary {
        keywords: templates.into_iter().map(|t| t.word).collect(),
        clip_count,
        clips_dir,
        noise_dir,
        alignments_path,
    })
}
