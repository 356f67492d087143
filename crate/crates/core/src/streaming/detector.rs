//! Sliding-window detector: per-window target scores, trailing-mean
//! smoothing, and the rising-edge trigger with a suppression window.

use crate::audio::{frame_stream, AudioBuffer, Spectrogram, SpectrogramExtractor, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::fewshot::FewShotHead;
use crate::model::EmbeddingModel;
use crate::streaming::{Detection, StreamingConfig};

/// Raw per-window target scores at a fixed stride.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTrace {
    pub scores: Vec<f32>,
    pub stride_s: f64,
    pub window_s: f64,
}

impl ScoreTrace {
    /// Trigger time for window `i`: the window's end.
    pub fn window_end_s(&self, i: usize) -> f64 {
        i as f64 * self.stride_s + self.window_s
    }
}

/// Score every 1-second window of the stream through the head.
pub fn window_scores(
    head: &FewShotHead,
    embedding: &EmbeddingModel,
    stream: &AudioBuffer,
    stride_s: f64,
) -> Result<ScoreTrace> {
    if stream.duration_s() < 1.0 {
        return Err(Error::Streaming("stream must be at least one second".into()));
    }
    let extractor = SpectrogramExtractor::new(&embedding.frontend, DEFAULT_SAMPLE_RATE)?;
    let mut specs: Vec<Spectrogram> = Vec::new();
    for (_, window) in frame_stream(stream, 1.0, stride_s)? {
        specs.push(extractor.compute(window)?);
    }
    let refs: Vec<&Spectrogram> = specs.iter().collect();
    let scores = head.target_scores(embedding, &refs)?;
    Ok(ScoreTrace {
        scores,
        stride_s,
        window_s: 1.0,
    })
}

/// Trailing mean over the last `frames` scores (shorter at the start).
pub fn smooth_scores(scores: &[f32], frames: usize) -> Vec<f32> {
    let frames = frames.max(1);
    let mut out = Vec::with_capacity(scores.len());
    for i in 0..scores.len() {
        let lo = (i + 1).saturating_sub(frames);
        let sum: f64 = scores[lo..=i].iter().map(|&s| f64::from(s)).sum();
        out.push((sum / (i - lo + 1) as f64) as f32);
    }
    out
}

/// The trigger state machine over raw scores: smooth, then emit a
/// detection whenever the smoothed score crosses the threshold from below
/// and no detection fired within the suppression window. Suppression is
/// enforced at stride granularity (window index distance), which keeps
/// the state machine exact in integer arithmetic. Returns
/// (window index, smoothed score) pairs.
pub fn detect_from_scores(
    scores: &[f32],
    stride_s: f64,
    cfg: &StreamingConfig,
) -> Vec<(usize, f32)> {
    let smoothing_frames = (cfg.smoothing_window_s / stride_s).round().max(1.0) as usize;
    let suppression_frames = (cfg.suppression_window_s / stride_s).round().max(1.0) as usize;
    let smoothed = smooth_scores(scores, smoothing_frames);
    let mut detections = Vec::new();
    let mut last_emit: Option<usize> = None;
    for (i, &s) in smoothed.iter().enumerate() {
        let prev = if i == 0 { 0.0 } else { smoothed[i - 1] };
        let crossing = f64::from(s) >= cfg.detection_threshold
            && f64::from(prev) < cfg.detection_threshold;
        if !crossing {
            continue;
        }
        let suppressed = match last_emit {
            Some(prev_i) => i - prev_i < suppression_frames,
            None => false,
        };
        if suppressed {
            continue;
        }
        last_emit = Some(i);
        detections.push((i, s));
    }
    detections
}

/// Full detector: window scoring, smoothing, trigger, suppression.
/// Detection times are window ends.
pub fn run_detector(
    head: &FewShotHead,
    embedding: &EmbeddingModel,
    stream: &AudioBuffer,
    cfg: &StreamingConfig,
) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let trace = window_scores(head, embedding, stream, cfg.stride_s)?;
    Ok(detections_from_trace(&trace, head, cfg))
}

pub(crate) fn detections_from_trace(
    trace: &ScoreTrace,
    head: &FewShotHead,
    cfg: &StreamingConfig,
) -> Vec<Detection> {
    detect_from_scores(&trace.scores, trace.stride_s, cfg)
        .into_iter()
        .map(|(i, score)| Detection {
            word: head.target_word.clone(),
            time_s: trace.window_end_s(i),
            score,
        })
        .collect()
}
