//! The experiment configuration file: one JSON document carrying every
//! tunable, overridable per command by flags. A single seed drives all
//! stochastic steps.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use mkws_core::audio::FrontendConfig;
use mkws_core::augment::AugmentConfig;
use mkws_core::fewshot::FineTuneConfig;
use mkws_core::model::{ConvStage, EmbeddingNetSpec, PaddingVariant};
use mkws_core::streaming::StreamingConfig;
use mkws_core::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KeywordSelection {
    pub min_char_len: usize,
    pub top_k: usize,
}

impl Default for KeywordSelection {
    fn default() -> Self {
        Self { min_char_len: 3, top_k: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingSection {
    pub trunk: Vec<ConvStage>,
    pub dense_units: Vec<usize>,
    pub embedding_units: usize,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        let desk = EmbeddingNetSpec::desk_default(1);
        Self {
            trunk: desk.trunk,
            dense_units: desk.dense_units,
            embedding_units: desk.embedding_units,
        }
    }
}

impl EmbeddingSection {
    pub fn to_spec(&self, num_keywords: usize, frontend: &FrontendConfig) -> EmbeddingNetSpec {
        // input shape follows from the frontend at 1 s / 16 kHz
        let window = frontend.window_len(mkws_core::audio::DEFAULT_SAMPLE_RATE);
        let hop = frontend.hop_len(mkws_core::audio::DEFAULT_SAMPLE_RATE);
        let frames = (mkws_core::audio::DEFAULT_SAMPLE_RATE as usize - window) / hop + 1;
        EmbeddingNetSpec {
            trunk: self.trunk.clone(),
            dense_units: self.dense_units.clone(),
            embedding_units: self.embedding_units,
            num_classes: num_keywords + 1,
            input_frames: frames,
            input_bins: frontend.num_mel_bins,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub noise_fraction: f64,
    pub padding_variant: PaddingVariant,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.001,
            noise_fraction: 0.10,
            padding_variant: PaddingVariant::SilenceOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    /// Number of evenly spaced thresholds over [0, 1].
    pub threshold_points: usize,
    pub report_threshold: f64,
    pub max_positives: usize,
    pub negatives_total: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            threshold_points: 101,
            report_threshold: 0.8,
            max_positives: 1995,
            negatives_total: 30_000,
        }
    }
}

impl EvalSection {
    pub fn threshold_grid(&self) -> Vec<f64> {
        let n = self.threshold_points.max(2);
        (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamingSection {
    #[serde(flatten)]
    pub config: StreamingConfig,
    pub gap_min_s: f64,
    pub gap_max_s: f64,
    pub wakeword_targets: usize,
    pub wakeword_nontargets: usize,
    pub sentence_duration_s: f64,
}

impl Default for StreamingSection {
    fn default() -> Self {
        Self {
            config: StreamingConfig::default(),
            gap_min_s: 1.0,
            gap_max_s: 3.0,
            wakeword_targets: 100,
            wakeword_nontargets: 100,
            sentence_duration_s: 1200.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Default root for audio/clip paths; falls back to $MKWS_DATA_ROOT.
    pub data_root: Option<PathBuf>,
    pub noise_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub frontend: FrontendConfig,
    pub augment: AugmentConfig,
    pub keywords: KeywordSelection,
    pub split_fractions: SplitFractions,
    pub bank_size: usize,
    pub embedding: EmbeddingSection,
    pub training: TrainingSection,
    pub finetune: FineTuneConfig,
    pub eval: EvalSection,
    pub streaming: StreamingSection,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { train: 0.8, val: 0.1, test: 0.1 }
    }
}

impl SplitFractions {
    pub fn as_tuple(&self) -> (f64, f64, f64) {
        (self.train, self.val, self.test)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Config from --config if given, defaults otherwise, with the --seed
    /// override applied.
    pub fn resolve(config_path: Option<&Path>, seed_override: Option<u64>) -> Result<Self> {
        let mut cfg = match config_path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        if let Some(seed) = seed_override {
            cfg.seed = seed;
        }
        cfg.finetune.seed = cfg.seed;
        cfg.synth.seed = cfg.seed;
        Ok(cfg)
    }

    pub fn data_root(&self) -> Option<PathBuf> {
        self.data_root
            .clone()
            .or_else(|| std::env::var_os("MKWS_DATA_ROOT").map(PathBuf::from))
    }

    pub fn bank_size_default(&self) -> usize {
        if self.bank_size == 0 {
            5000
        } else {
            self.bank_size
        }
    }
}
