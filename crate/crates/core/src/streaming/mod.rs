//! Streaming evaluation: build wakeword and sentence test streams with
//! exact ground-truth timelines, run the sliding-window detector with
//! posterior smoothing and suppression, and score detections.

mod detector;
mod matcher;

pub use detector::{detect_from_scores, run_detector, smooth_scores, window_scores, ScoreTrace};
pub use matcher::{match_detections, threshold_sweep, MatchOutcome};

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioBuffer, DEFAULT_SAMPLE_RATE};
use crate::dataset::AlignmentRecord;
use crate::error::{Error, Result};
use crate::fingerprint::stable_hash64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Isolated words separated by noise gaps.
    Wakeword,
    /// Concatenated full sentences searched for the target.
    Sentence,
}

/// Stream construction parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub regime: Regime,
    pub target_word: String,
    /// Gap bounds for the wakeword regime; mean gap = (min+max)/2.
    pub gap_min_s: f64,
    pub gap_max_s: f64,
    pub duration_target_s: f64,
}

impl StreamSpec {
    pub fn wakeword(target_word: impl Into<String>) -> Self {
        Self {
            regime: Regime::Wakeword,
            target_word: target_word.into(),
            gap_min_s: 1.0,
            gap_max_s: 3.0,
            duration_target_s: 600.0,
        }
    }

    pub fn sentence(target_word: impl Into<String>) -> Self {
        Self {
            regime: Regime::Sentence,
            target_word: target_word.into(),
            gap_min_s: 0.0,
            gap_max_s: 0.0,
            duration_target_s: 1200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub word: String,
    pub time_s: f64,
    pub is_target: bool,
}

/// Reference occurrences for scoring a stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthTimeline {
    pub duration_s: f64,
    pub regime: Regime,
    pub entries: Vec<TimelineEntry>,
}

impl GroundTruthTimeline {
    pub fn target_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_target).count()
    }

    pub fn nontarget_count(&self) -> usize {
        self.entries.iter().filter(|e| !e.is_target).count()
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev = 0.0f64;
        for e in &self.entries {
            if e.time_s < prev || e.time_s > self.duration_s {
                return Err(Error::Streaming(format!(
                    "timeline entry at {} s out of order or beyond {} s",
                    e.time_s, self.duration_s
                )));
            }
            prev = e.time_s;
        }
        Ok(())
    }

    /// Sidecar JSON: {duration_s, regime, entries: [{word, time_s, is_target}]}.
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let json = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&json)?)
    }
}

/// Detector post-processing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamingConfig {
    /// Window hop for inference.
    pub stride_s: f64,
    /// Trailing window whose mean is the smoothed score.
    pub smoothing_window_s: f64,
    pub detection_threshold: f64,
    /// Minimum spacing between emitted detections.
    pub suppression_window_s: f64,
    /// Detection-to-truth matching tolerance.
    pub match_tolerance_s: f64,
}

impl Default for StreamingConfig {
    fn default() -> Self {
        Self {
            stride_s: 0.020,
            smoothing_window_s: 0.100,
            detection_threshold: 0.8,
            suppression_window_s: 0.500,
            match_tolerance_s: 0.750,
        }
    }
}

impl StreamingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride_s <= 0.0
            || self.smoothing_window_s <= 0.0
            || self.suppression_window_s <= 0.0
            || self.match_tolerance_s <= 0.0
        {
            return Err(Error::Config("streaming parameters must be positive".into()));
        }
        if self.match_tolerance_s < self.stride_s {
            return Err(Error::Config("match tolerance must be >= stride".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub word: String,
    /// Trigger time = end of the window that fired.
    pub time_s: f64,
    /// Smoothed score at the trigger.
    pub score: f32,
}

/// One threshold's scored counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub true_positives: usize,
    pub false_accepts: usize,
    pub false_rejects: usize,
    pub tpr: f64,
    /// Wakeword regime: false accepts / non-target occurrences.
    /// Sentence regime: false accepts / target occurrences.
    pub far: f64,
    /// False accepts per stream hour, defined for both regimes.
    pub fa_per_hour: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamingReport {
    pub target_word: String,
    pub regime: Regime,
    pub rows: Vec<ThresholdRow>,
}

impl StreamingReport {
    /// CSV rows: threshold,tp,fa,fr,tpr,far,fa_per_hour.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["threshold", "tp", "fa", "fr", "tpr", "far", "fa_per_hour"])?;
        for row in &self.rows {
            w.write_record([
                row.threshold.to_string(),
                row.true_positives.to_string(),
                row.false_accepts.to_string(),
                row.false_rejects.to_string(),
                row.tpr.to_string(),
                row.far.to_string(),
                row.fa_per_hour.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Interleave target and non-target clips in shuffled order, separated by
/// noise-filled gaps drawn uniformly from [gap_min, gap_max]. The timeline
/// records each clip's onset. Deterministic per seed.
pub fn build_wakeword_stream(
    targets: &[AudioBuffer],
    target_word: &str,
    nontargets: &[(String, AudioBuffer)],
    noise: &[AudioBuffer],
    spec: &StreamSpec,
    seed: u64,
) -> Result<(AudioBuffer, GroundTruthTimeline)> {
    if targets.is_empty() {
        return Err(Error::Streaming("need at least one target clip".into()));
    }
    if noise.is_empty() {
        return Err(Error::Streaming("need noise for the gaps".into()));
    }
    if spec.gap_min_s > spec.gap_max_s || spec.gap_min_s < 0.0 {
        return Err(Error::Streaming(format!(
            "bad gap range [{}, {}]",
            spec.gap_min_s, spec.gap_max_s
        )));
    }
    let sr = DEFAULT_SAMPLE_RATE;
    let mut components: Vec<(&str, &AudioBuffer, bool)> = Vec::new();
    for clip in targets {
        components.push((target_word, clip, true));
    }
    for (word, clip) in nontargets {
        components.push((word.as_str(), clip, false));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash64(seed, &[b"wakeword-stream"]));
    components.shuffle(&mut rng);

    let mut samples: Vec<f32> = Vec::new();
    let mut entries = Vec::new();
    for (word, clip, is_target) in components {
        if clip.sample_rate != sr {
            return Err(Error::Streaming(format!("clip rate {} != {sr}", clip.sample_rate)));
        }
        let gap_s = if spec.gap_max_s > spec.gap_min_s {
            rng.gen_range(spec.gap_min_s..=spec.gap_max_s)
        } else {
            spec.gap_min_s
        };
        let gap_len = (gap_s * f64::from(sr)).round() as usize;
        let src = &noise[rng.gen_range(0..noise.len())];
        let offset = rng.gen_range(0..src.len().max(1));
        for i in 0..gap_len {
            samples.push(src.samples[(offset + i) % src.len()].clamp(-1.0, 1.0));
        }
        entries.push(TimelineEntry {
            word: word.to_string(),
            time_s: samples.len() as f64 / f64::from(sr),
            is_target,
        });
        samples.extend_from_slice(&clip.samples);
    }

    let duration_s = samples.len() as f64 / f64::from(sr);
    let timeline = GroundTruthTimeline {
        duration_s,
        regime: Regime::Wakeword,
        entries,
    };
    timeline.validate()?;
    Ok((AudioBuffer { samples, sample_rate: sr }, timeline))
}

/// Concatenate annotated sentences (shuffled, up to the duration target);
/// the timeline holds every aligned occurrence of the target word.
pub fn build_sentence_stream(
    sentences: &[(AudioBuffer, Vec<AlignmentRecord>)],
    target_word: &str,
    duration_target_s: f64,
    seed: u64,
) -> Result<(AudioBuffer, GroundTruthTimeline)> {
    if sentences.is_empty() {
        return Err(Error::Streaming("no sentences supplied".into()));
    }
    if !sentences
        .iter()
        .any(|(_, recs)| recs.iter().any(|r| r.word == target_word))
    {
        return Err(Error::Streaming(format!(
            "no sentence contains the target word {target_word:?}"
        )));
    }
    let sr = DEFAULT_SAMPLE_RATE;
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash64(seed, &[b"sentence-stream"]));
    order.shuffle(&mut rng);

    let mut samples: Vec<f32> = Vec::new();
    let mut entries = Vec::new();
    for &idx in &order {
        let (clip, recs) = &sentences[idx];
        if clip.sample_rate != sr {
            return Err(Error::Streaming(format!("clip rate {} != {sr}", clip.sample_rate)));
        }
        let offset_s = samples.len() as f64 / f64::from(sr);
        for rec in recs {
            if rec.word == target_word {
                entries.push(TimelineEntry {
                    word: rec.word.clone(),
                    time_s: offset_s + rec.start_s,
                    is_target: true,
                });
            }
        }
        samples.extend_from_slice(&clip.samples);
        if samples.len() as f64 / f64::from(sr) >= duration_target_s {
            break;
        }
    }
    entries.sort_by(|a, b| a.time_s.total_cmp(&b.time_s));

    let duration_s = samples.len() as f64 / f64::from(sr);
    let timeline = GroundTruthTimeline {
        duration_s,
        regime: Regime::Sentence,
        entries,
    };
    timeline.validate()?;
    Ok((AudioBuffer { samples, sample_rate: sr }, timeline))
}
