//! Greedy chronological matching of detections against the ground-truth
//! timeline, and the threshold sweep that reuses one score trace.

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};
use crate::fewshot::FewShotHead;
use crate::model::EmbeddingModel;
use crate::streaming::detector::{detections_from_trace, window_scores};
use crate::streaming::{
    Detection, GroundTruthTimeline, Regime, StreamingConfig, StreamingReport, ThresholdRow,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub row: ThresholdRow,
    /// (detection index, timeline entry index) pairs.
    pub pairs: Vec<(usize, usize)>,
}

/// Greedy chronological matching: each detection takes the earliest
/// unmatched target occurrence within the tolerance. Unmatched detections
/// are false accepts; unmatched occurrences are false rejects.
pub fn match_detections(
    detections: &[Detection],
    truth: &GroundTruthTimeline,
    cfg: &StreamingConfig,
) -> MatchOutcome {
    let targets: Vec<(usize, f64)> = truth
        .entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.is_target)
        .map(|(i, e)| (i, e.time_s))
        .collect();
    let mut taken = vec![false; targets.len()];
    let mut pairs = Vec::new();
    for (d_idx, det) in detections.iter().enumerate() {
        for (t_pos, &(t_idx, t_time)) in targets.iter().enumerate() {
            if taken[t_pos] {
                continue;
            }
            if (det.time_s - t_time).abs() <= cfg.match_tolerance_s {
                taken[t_pos] = true;
                pairs.push((d_idx, t_idx));
                break;
            }
            // timeline times ascend; once past the window, stop scanning
            if t_time - det.time_s > cfg.match_tolerance_s {
                break;
            }
        }
    }

    let tp = pairs.len();
    let fa = detections.len() - tp;
    let fr = targets.len() - tp;
    let tpr = if targets.is_empty() {
        1.0
    } else {
        tp as f64 / targets.len() as f64
    };
    let far = match truth.regime {
        Regime::Wakeword => {
            let n = truth.nontarget_count();
            if n == 0 {
                if fa == 0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                fa as f64 / n as f64
            }
        }
        Regime::Sentence => {
            if targets.is_empty() {
                if fa == 0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                fa as f64 / targets.len() as f64
            }
        }
    };
    let fa_per_hour = if truth.duration_s > 0.0 {
        fa as f64 * 3600.0 / truth.duration_s
    } else {
        0.0
    };

    MatchOutcome {
        row: ThresholdRow {
            threshold: cfg.detection_threshold,
            true_positives: tp,
            false_accepts: fa,
            false_rejects: fr,
            tpr,
            far,
            fa_per_hour,
        },
        pairs,
    }
}

/// Detector + matcher per threshold; window scores are computed once and
/// reused across the whole sweep.
pub fn threshold_sweep(
    head: &FewShotHead,
    embedding: &EmbeddingModel,
    stream: &AudioBuffer,
    truth: &GroundTruthTimeline,
    thresholds: &[f64],
    cfg: &StreamingConfig,
) -> Result<StreamingReport> {
    cfg.validate()?;
    if thresholds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Streaming("thresholds must be strictly ascending".into()));
    }
    let trace = window_scores(head, embedding, stream, cfg.stride_s)?;
    let mut rows = Vec::with_capacity(thresholds.len());
    for &threshold in thresholds {
        let cfg_t = StreamingConfig {
            detection_threshold: threshold,
            ..cfg.clone()
        };
        let detections = detections_from_trace(&trace, head, &cfg_t);
        rows.push(match_detections(&detections, truth, &cfg_t).row);
    }
    Ok(StreamingReport {
        target_word: head.target_word.clone(),
        regime: truth.regime,
        rows,
    })
}
