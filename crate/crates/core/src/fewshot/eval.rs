//! Classification evaluation for 5-shot models: threshold sweeps over the
//! remaining positives and a three-way negative pool, F1 at the reporting
//! threshold, and per-language curve aggregation.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{load_audio, Spectrogram, SpectrogramExtractor, DEFAULT_SAMPLE_RATE};
use crate::dataset::{DatasetManifest, PaddingMode, UnknownBank};
use crate::error::{Error, Result};
use crate::fewshot::FewShotHead;
use crate::fingerprint::stable_hash64;
use crate::model::EmbeddingModel;

/// The three negative families of the evaluation protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeCategory {
    /// Words the embedding model was trained on.
    EmbeddingVocab,
    /// Samples from the unknown bank used during fine-tuning.
    UnknownBank,
    /// Words novel to both the embedding and the KWS model.
    Novel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub word: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalPools {
    pub target_word: String,
    pub language: String,
    pub positives: Vec<EvalSample>,
    pub negatives: Vec<(NegativeCategory, EvalSample)>,
}

impl EvalPools {
    pub fn validate(&self) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::Eval("positive pool is empty".into()));
        }
        if self.negatives.is_empty() {
            return Err(Error::Eval("negative pool is empty".into()));
        }
        if let Some((_, bad)) = self
            .negatives
            .iter()
            .find(|(_, s)| s.word == self.target_word)
        {
            return Err(Error::Eval(format!(
                "negative sample {} carries the target word",
                bad.path
            )));
        }
        let mut counts = [0usize; 3];
        for (cat, _) in &self.negatives {
            counts[*cat as usize] += 1;
        }
        let used: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
        if let (Some(&max), Some(&min)) = (used.iter().max(), used.iter().min()) {
            if max - min > 1 {
                return Err(Error::Eval(format!(
                    "negative categories must be equal sized +/-1, got {counts:?}"
                )));
            }
        }
        Ok(())
    }
}

/// Evaluation description: pools plus the threshold grid.
#[derive(Debug, Clone)]
pub struct EvalSpec {
    pub pools: EvalPools,
    pub thresholds: Vec<f64>,
    pub report_threshold: f64,
}

/// 101-point grid over [0, 1].
pub fn default_threshold_grid() -> Vec<f64> {
    (0..=100).map(|i| f64::from(i) / 100.0).collect()
}

/// Draw evaluation pools from a manifest per the three-way protocol:
/// positives are the target's remaining silence-padded samples (shots
/// excluded, capped at `max_positives`); negatives split evenly between
/// embedding-vocabulary words, unknown-bank samples, and novel words.
#[allow(clippy::too_many_arguments)]
pub fn build_eval_pools(
    manifest: &DatasetManifest,
    bank: &UnknownBank,
    embedding_classes: &[String],
    target_word: &str,
    exclude_paths: &BTreeSet<String>,
    total_negatives: usize,
    max_positives: usize,
    seed: u64,
) -> Result<EvalPools> {
    let class_set: BTreeSet<&str> = embedding_classes.iter().map(String::as_str).collect();
    let bank_paths: BTreeSet<&str> = bank.entries.iter().map(|e| e.path.as_str()).collect();

    let mut positives = Vec::new();
    let mut language = String::new();
    let mut vocab_pool = Vec::new();
    let mut novel_pool = Vec::new();
    for entry in &manifest.entries {
        if entry.padding_mode != PaddingMode::Silence {
            continue;
        }
        if entry.word == target_word {
            if !exclude_paths.contains(&entry.path) {
                language = entry.language.clone();
                positives.push(EvalSample {
                    word: entry.word.clone(),
                    path: entry.path.clone(),
                });
            }
            continue;
        }
        let sample = EvalSample {
            word: entry.word.clone(),
            path: entry.path.clone(),
        };
        // bank samples stay exclusive to the bank category
        if bank_paths.contains(entry.path.as_str()) {
            continue;
        }
        if class_set.contains(entry.word.as_str()) {
            vocab_pool.push(sample);
        } else {
            novel_pool.push(sample);
        }
    }
    let mut bank_pool: Vec<EvalSample> = bank
        .entries_excluding(target_word)
        .into_iter()
        .map(|e| EvalSample {
            word: e.word.clone(),
            path: e.path.clone(),
        })
        .collect();

    if positives.is_empty() {
        return Err(Error::Eval(format!(
            "no positive samples for {target_word:?} outside the shots"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash64(seed, &[b"pools", target_word.as_bytes()]));
    if positives.len() > max_positives {
        positives.shuffle(&mut rng);
        positives.truncate(max_positives);
    }

    let base = total_negatives / 3;
    let rem = total_negatives % 3;
    let want = [
        (NegativeCategory::EmbeddingVocab, base + usize::from(rem > 0)),
        (NegativeCategory::UnknownBank, base + usize::from(rem > 1)),
        (NegativeCategory::Novel, base),
    ];
    let mut negatives = Vec::with_capacity(total_negatives);
    for (category, count) in want {
        let pool = match category {
            NegativeCategory::EmbeddingVocab => &mut vocab_pool,
            NegativeCategory::UnknownBank => &mut bank_pool,
            NegativeCategory::Novel => &mut novel_pool,
        };
        if pool.len() < count {
            return Err(Error::Eval(format!(
                "negative category {category:?} has {} samples, need {count}",
                pool.len()
            )));
        }
        pool.shuffle(&mut rng);
        negatives.extend(pool.drain(..count).map(|s| (category, s)));
    }

    let pools = EvalPools {
        target_word: target_word.to_string(),
        language,
        positives,
        negatives,
    };
    pools.validate()?;
    Ok(pools)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub keyword: String,
    pub language: String,
    pub points: Vec<RocPoint>,
    pub report_threshold: f64,
    pub f1_at_report: f64,
    pub positives: usize,
    pub negatives: usize,
}

/// F1 from raw counts: 2PR/(P+R), zero when undefined.
pub fn f1_from_counts(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Sweep thresholds over score sets. TPR/FPR use a sorted-score fast path;
/// the F1 at the reporting threshold is cross-checked against a naive
/// per-clip counting oracle on every call.
pub fn roc_from_scores(
    positive_scores: &[f32],
    negative_scores: &[f32],
    thresholds: &[f64],
    report_threshold: f64,
) -> Result<(Vec<RocPoint>, f64)> {
    if positive_scores.is_empty() || negative_scores.is_empty() {
        return Err(Error::Eval("score pools must be non-empty".into()));
    }
    let mut pos_sorted: Vec<f32> = positive_scores.to_vec();
    let mut neg_sorted: Vec<f32> = negative_scores.to_vec();
    pos_sorted.sort_by(|a, b| b.total_cmp(a));
    neg_sorted.sort_by(|a, b| b.total_cmp(a));
    let accepted = |sorted: &[f32], threshold: f64| -> usize {
        sorted.partition_point(|&s| f64::from(s) >= threshold)
    };

    let mut points = Vec::with_capacity(thresholds.len());
    for &threshold in thresholds {
        let tp = accepted(&pos_sorted, threshold);
        let fp = accepted(&neg_sorted, threshold);
        points.push(RocPoint {
            threshold,
            tpr: tp as f64 / positive_scores.len() as f64,
            fpr: fp as f64 / negative_scores.len() as f64,
        });
    }

    let tp = accepted(&pos_sorted, report_threshold);
    let fp = accepted(&neg_sorted, report_threshold);
    let fn_ = positive_scores.len() - tp;
    let f1 = f1_from_counts(tp, fp, fn_);

    // independent recount, one decision at a time
    let mut tp_naive = 0usize;
    let mut fp_naive = 0usize;
    let mut fn_naive = 0usize;
    for &s in positive_scores {
        if f64::from(s) >= report_threshold {
            tp_naive += 1;
        } else {
            fn_naive += 1;
        }
    }
    for &s in negative_scores {
        if f64::from(s) >= report_threshold {
            fp_naive += 1;
        }
    }
    let f1_naive = if tp_naive == 0 {
        0.0
    } else {
        let p = tp_naive as f64 / (tp_naive + fp_naive) as f64;
        let r = tp_naive as f64 / (tp_naive + fn_naive) as f64;
        2.0 * p * r / (p + r)
    };
    assert_eq!((tp, fp, fn_), (tp_naive, fp_naive, fn_naive), "count routes disagree");
    assert!((f1 - f1_naive).abs() < 1e-12, "f1 routes disagree: {f1} vs {f1_naive}");

    Ok((points, f1))
}

/// Score every pool clip through the head and sweep the threshold grid.
pub fn evaluate_classification(
    head: &FewShotHead,
    embedding: &EmbeddingModel,
    spec: &EvalSpec,
    clip_root: &Path,
) -> Result<RocCurve> {
    spec.pools.validate()?;
    let extractor = SpectrogramExtractor::new(&embedding.frontend, DEFAULT_SAMPLE_RATE)?;
    let load_specs = |samples: &[EvalSample]| -> Result<Vec<Spectrogram>> {
        samples
            .iter()
            .map(|s| {
                let clip = load_audio(clip_root.join(&s.path))?;
                extractor.compute(&clip.samples)
            })
            .collect()
    };
    let pos_specs = load_specs(&spec.pools.positives)?;
    let neg_samples: Vec<EvalSample> = spec.pools.negatives.iter().map(|(_, s)| s.clone()).collect();
    let neg_specs = load_specs(&neg_samples)?;

    let pos_refs: Vec<&Spectrogram> = pos_specs.iter().collect();
    let neg_refs: Vec<&Spectrogram> = neg_specs.iter().collect();
    let pos_scores = head.target_scores(embedding, &pos_refs)?;
    let neg_scores = head.target_scores(embedding, &neg_refs)?;

    let mut thresholds = spec.thresholds.clone();
    thresholds.sort_by(f64::total_cmp);
    let (points, f1) = roc_from_scores(&pos_scores, &neg_scores, &thresholds, spec.report_threshold)?;
    Ok(RocCurve {
        keyword: spec.pools.target_word.clone(),
        language: spec.pools.language.clone(),
        points,
        report_threshold: spec.report_threshold,
        f1_at_report: f1,
        positives: pos_scores.len(),
        negatives: neg_scores.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageCurve {
    pub language: String,
    pub keywords: usize,
    /// Pointwise mean over the language's per-keyword curves.
    pub mean: Vec<RocPoint>,
    /// Pointwise population standard deviation bands.
    pub sd_tpr: Vec<f64>,
    pub sd_fpr: Vec<f64>,
    /// Unweighted mean F1 at the reporting threshold.
    pub mean_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageReport {
    pub languages: Vec<LanguageCurve>,
    pub overall_mean_f1: f64,
    pub report_threshold: f64,
}

/// Pointwise mean and standard-deviation band per language over a common
/// threshold grid, plus the unweighted mean F1 across keywords.
pub fn aggregate_language_report(curves: &[RocCurve]) -> Result<LanguageReport> {
    if curves.is_empty() {
        return Err(Error::Eval("no curves to aggregate".into()));
    }
    let grid: Vec<f64> = curves[0].points.iter().map(|p| p.threshold).collect();
    let report_threshold = curves[0].report_threshold;
    for c in curves {
        let g: Vec<f64> = c.points.iter().map(|p| p.threshold).collect();
        if g != grid || c.report_threshold != report_threshold {
            return Err(Error::Eval(format!(
                "curve {:?} uses a different threshold grid",
                c.keyword
            )));
        }
    }

    let mut languages: Vec<String> = curves.iter().map(|c| c.language.clone()).collect();
    languages.sort();
    languages.dedup();

    let mut out = Vec::new();
    for language in languages {
        let members: Vec<&RocCurve> = curves.iter().filter(|c| c.language == language).collect();
        let n = members.len() as f64;
        let mut mean = Vec::with_capacity(grid.len());
        let mut sd_tpr = Vec::with_capacity(grid.len());
        let mut sd_fpr = Vec::with_capacity(grid.len());
        for (i, &threshold) in grid.iter().enumerate() {
            let tprs: Vec<f64> = members.iter().map(|c| c.points[i].tpr).collect();
            let fprs: Vec<f64> = members.iter().map(|c| c.points[i].fpr).collect();
            let m_tpr = tprs.iter().sum::<f64>() / n;
            let m_fpr = fprs.iter().sum::<f64>() / n;
            mean.push(RocPoint { threshold, tpr: m_tpr, fpr: m_fpr });
            sd_tpr.push((tprs.iter().map(|t| (t - m_tpr).powi(2)).sum::<f64>() / n).sqrt());
            sd_fpr.push((fprs.iter().map(|f| (f - m_fpr).powi(2)).sum::<f64>() / n).sqrt());
        }
        let mean_f1 = members.iter().map(|c| c.f1_at_report).sum::<f64>() / n;
        out.push(LanguageCurve {
            language,
            keywords: members.len(),
            mean,
            sd_tpr,
            sd_fpr,
            mean_f1,
        });
    }
    let overall_mean_f1 =
        curves.iter().map(|c| c.f1_at_report).sum::<f64>() / curves.len() as f64;
    Ok(LanguageReport {
        languages: out,
        overall_mean_f1,
        report_threshold,
    })
}

/// Plot-ready CSV: keyword,language,threshold,tpr,fpr.
pub fn write_roc_csv<P: AsRef<Path>>(curves: &[RocCurve], path: P) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["keyword", "language", "threshold", "tpr", "fpr"])?;
    for curve in curves {
        for p in &curve.points {
            w.write_record([
                curve.keyword.clone(),
                curve.language.clone(),
                p.threshold.to_string(),
                p.tpr.to_string(),
                p.fpr.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub report_threshold: f64,
    pub per_keyword: Vec<KeywordF1>,
    pub per_language: Vec<LanguageF1>,
    pub overall_mean_f1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KeywordF1 {
    pub keyword: String,
    pub language: String,
    pub f1: f64,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LanguageF1 {
    pub language: String,
    pub keywords: usize,
    pub mean_f1: f64,
}

/// JSON summary with F1 at the reporting threshold per keyword and
/// unweighted means per language.
pub fn write_summary_json<P: AsRef<Path>>(curves: &[RocCurve], path: P) -> Result<()> {
    let report = aggregate_language_report(curves)?;
    let summary = EvalSummary {
        report_threshold: report.report_threshold,
        per_keyword: curves
            .iter()
            .map(|c| KeywordF1 {
                keyword: c.keyword.clone(),
                language: c.language.clone(),
                f1: c.f1_at_report,
                positives: c.positives,
                negatives: c.negatives,
            })
            .collect(),
        per_language: report
            .languages
            .iter()
            .map(|l| LanguageF1 {
                language: l.language.clone(),
                keywords: l.keywords,
                mean_f1: l.mean_f1,
            })
            .collect(),
        overall_mean_f1: report.overall_mean_f1,
    };
    let json = serde_json::to_string_pretty(&summary)?;
    std::fs::write(path, json)?;
    Ok(())
}
