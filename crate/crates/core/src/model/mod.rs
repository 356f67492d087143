//! The keyword-classification network whose penultimate SELU activations
//! are the embedding feature vector: trunk of conv+ReLU stages, global
//! average pooling, a ReLU dense stack, a SELU embedding layer, and a
//! softmax classifier over the keyword set plus a background class.

mod cross;
mod io;
mod train;

pub use cross::{cross_dataset_eval, BinaryDataset, CrossGrid};
pub use io::{read_container, read_header, write_container, ContainerHeader, EmbeddingHeader,
    FewshotHeader, FORMAT_VERSION, MAGIC};
pub use train::{
    background_crop, load_noise_dir, noise_crop, train_embedding, validate, LanguageAccuracy,
    PaddingVariant, TrainingConfig, TrainingReport, ValidationTable,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{FrontendConfig, Spectrogram};
use crate::error::{Error, Result};
use crate::fingerprint::HashWriter;
use crate::nn::{
    activation_backward, activation_forward, conv2d_backward, conv2d_forward, dense_backward,
    dense_forward, global_avg_pool_backward, global_avg_pool_forward, Activation, Padding,
    Parameter, Tensor,
};

/// Class index 0 is always the background (pure noise) category.
pub const BACKGROUND_CLASS: &str = "_background_";

/// One conv+ReLU stage of the trunk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Architecture description. The trunk is a plain conv stack standing in
/// for the large pretrained trunks used in full-scale systems; the embedding
/// interface (pool, dense stack, SELU penultimate layer, softmax) is what
/// downstream components rely on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingNetSpec {
    pub trunk: Vec<ConvStage>,
    pub dense_units: Vec<usize>,
    pub embedding_units: usize,
    pub num_classes: usize,
    pub input_frames: usize,
    pub input_bins: usize,
}

impl EmbeddingNetSpec {
    /// Desk-scale default: three downsampling pairs of 3x3 convs with
    /// 16/32/64 filters, two 128-unit dense layers, 64-d embedding.
    pub fn desk_default(num_keywords: usize) -> Self {
        Self {
            trunk: vec![
                ConvStage { filters: 16, kernel: 3, stride: 1 },
                ConvStage { filters: 16, kernel: 3, stride: 2 },
                ConvStage { filters: 32, kernel: 3, stride: 1 },
                ConvStage { filters: 32, kernel: 3, stride: 2 },
                ConvStage { filters: 64, kernel: 3, stride: 1 },
                ConvStage { filters: 64, kernel: 3, stride: 2 },
            ],
            dense_units: vec![128, 128],
            embedding_units: 64,
            num_classes: num_keywords + 1,
            input_frames: 49,
            input_bins: 40,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_units < 2 {
            return Err(Error::Config("embedding_units must be >= 2".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be >= 2".into()));
        }
        if self.input_frames == 0 || self.input_bins == 0 {
            return Err(Error::Config("input shape must be nonzero".into()));
        }
        for (i, stage) in self.trunk.iter().enumerate() {
            if stage.filters == 0 || stage.kernel == 0 || stage.stride == 0 {
                return Err(Error::Config(format!("trunk stage {i} has a zero field")));
            }
        }
        // spatial dims must stay >= 1 through the trunk
        let (mut h, mut w) = (self.input_frames, self.input_bins);
        for stage in &self.trunk {
            h = h.div_ceil(stage.stride);
            w = w.div_ceil(stage.stride);
            if h == 0 || w == 0 {
                return Err(Error::Config("trunk downsamples input to nothing".into()));
            }
        }
        Ok(())
    }

    /// Total trainable scalar count (convs are bias-free; dense layers
    /// carry weight + bias).
    pub fn param_count(&self) -> usize {
        let mut count = 0;
        let mut channels = 1;
        for stage in &self.trunk {
            count += stage.kernel * stage.kernel * channels * stage.filters;
            channels = stage.filters;
        }
        let mut width = channels;
        for &units in &self.dense_units {
            count += width * units + units;
            width = units;
        }
        count += width * self.embedding_units + self.embedding_units;
        count += self.embedding_units * self.num_classes + self.num_classes;
        count
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingFingerprint {
    pub config_hash: String,
    pub data_hash: String,
}

#[derive(Debug, Clone)]
pub(crate) enum Layer {
    Conv {
        kernel: Parameter,
        stride: usize,
        padding: Padding,
    },
    Act(Activation),
    Pool,
    Dense {
        weight: Parameter,
        bias: Parameter,
    },
}

impl Layer {
    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv { kernel, stride, padding } => {
                conv2d_forward(input, &kernel.value, *stride, *padding)
            }
            Layer::Act(kind) => Ok(activation_forward(input, *kind)),
            Layer::Pool => global_avg_pool_forward(input),
            Layer::Dense { weight, bias } => dense_forward(input, &weight.value, &bias.value),
        }
    }

    /// Accumulates parameter gradients and returns the input gradient.
    fn backward(&mut self, input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv { kernel, stride, padding } => {
                let (g_in, g_k) = conv2d_backward(input, &kernel.value, *stride, *padding, grad_out)?;
                kernel.accumulate_grad(&g_k);
                Ok(g_in)
            }
            Layer::Act(kind) => Ok(activation_backward(input, *kind, grad_out)),
            Layer::Pool => global_avg_pool_backward(input.shape(), grad_out),
            Layer::Dense { weight, bias } => {
                let (g_in, g_w, g_b) = dense_backward(input, &weight.value, grad_out)?;
                weight.accumulate_grad(&g_w);
                bias.accumulate_grad(&g_b);
                Ok(g_in)
            }
        }
    }
}

/// The classifier/embedding network plus everything needed to reproduce
/// its inputs: class list, frontend config, and training fingerprint.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    pub spec: EmbeddingNetSpec,
    pub classes: Vec<String>,
    pub frontend: FrontendConfig,
    pub fingerprint: TrainingFingerprint,
    pub(crate) layers: Vec<Layer>,
}

fn he_uniform(rng: &mut ChaCha8Rng, fan_in: usize, shape: &[usize]) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt();
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|_| rng.gen_range(-limit..limit) as f32)
        .collect();
    Tensor::from_vec(shape, data).expect("shape/product agree")
}

fn lecun_normal(rng: &mut ChaCha8Rng, fan_in: usize, shape: &[usize]) -> Tensor {
    let std = (1.0 / fan_in as f64).sqrt();
    let len: usize = shape.iter().product();
    // Box-Muller keeps the sampler self-contained and seed-stable
    let data = (0..len)
        .map(|_| {
            let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
            (z * std) as f32
        })
        .collect();
    Tensor::from_vec(shape, data).expect("shape/product agree")
}

/// Build an initialized, untrained model. Deterministic per seed:
/// He-uniform for conv/ReLU layers, LeCun-normal for the SELU embedding
/// layer, zero biases.
pub fn build_model(
    spec: &EmbeddingNetSpec,
    classes: Vec<String>,
    frontend: &FrontendConfig,
    seed: u64,
) -> Result<EmbeddingModel> {
    spec.validate()?;
    if classes.len() != spec.num_classes {
        return Err(Error::Config(format!(
            "class list has {} entries, spec expects {}",
            classes.len(),
            spec.num_classes
        )));
    }
    if classes.first().map(String::as_str) != Some(BACKGROUND_CLASS) {
        return Err(Error::Config(format!(
            "class 0 must be {BACKGROUND_CLASS:?}, got {:?}",
            classes.first()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    let mut channels = 1usize;
    for (i, stage) in spec.trunk.iter().enumerate() {
        let fan_in = stage.kernel * stage.kernel * channels;
        let kernel = he_uniform(&mut rng, fan_in, &[stage.kernel, stage.kernel, channels, stage.filters]);
        layers.push(Layer::Conv {
            kernel: Parameter::new(format!("trunk{i}.kernel"), kernel),
            stride: stage.stride,
            padding: Padding::Same,
        });
        layers.push(Layer::Act(Activation::Relu));
        channels = stage.filters;
    }
    layers.push(Layer::Pool);

    let mut width = channels;
    for (i, &units) in spec.dense_units.iter().enumerate() {
        let weight = he_uniform(&mut rng, width, &[width, units]);
        layers.push(Layer::Dense {
            weight: Parameter::new(format!("dense{i}.weight"), weight),
            bias: Parameter::new(format!("dense{i}.bias"), Tensor::zeros(&[units])),
        });
        layers.push(Layer::Act(Activation::Relu));
        width = units;
    }

    let weight = lecun_normal(&mut rng, width, &[width, spec.embedding_units]);
    layers.push(Layer::Dense {
        weight: Parameter::new("embedding.weight", weight),
        bias: Parameter::new("embedding.bias", Tensor::zeros(&[spec.embedding_units])),
    });
    layers.push(Layer::Act(Activation::Selu));

    let weight = he_uniform(&mut rng, spec.embedding_units, &[spec.embedding_units, spec.num_classes]);
    layers.push(Layer::Dense {
        weight: Parameter::new("classifier.weight", weight),
        bias: Parameter::new("classifier.bias", Tensor::zeros(&[spec.num_classes])),
    });

    Ok(EmbeddingModel {
        spec: spec.clone(),
        classes,
        frontend: frontend.clone(),
        fingerprint: TrainingFingerprint::default(),
        layers,
    })
}

impl EmbeddingModel {
    pub fn parameters(&self) -> Vec<&Parameter> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Conv { kernel, .. } => out.push(kernel),
                Layer::Dense { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    pub(crate) fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv { kernel, .. } => out.push(kernel),
                Layer::Dense { weight, bias } => {
                    out.push(weight);
                    out.push(bias);
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.parameters().iter().map(|p| p.value.len()).sum()
    }

    /// SHA-256 over all parameter tensors; the frozen-embedding invariant
    /// compares this before and after fine-tuning.
    pub fn param_hash(&self) -> String {
        let mut hasher = HashWriter::new();
        for p in self.parameters() {
            hasher.update(p.name.as_bytes());
            for &d in p.value.shape() {
                hasher.update(&(d as u64).to_le_bytes());
            }
            for v in p.value.data() {
                hasher.update(&v.to_le_bytes());
            }
        }
        hasher.finish_hex()
    }

    /// Stack spectrograms into an NHWC batch tensor, validating shapes.
    pub fn input_tensor(&self, specs: &[&Spectrogram]) -> Result<Tensor> {
        let (t, f) = (self.spec.input_frames, self.spec.input_bins);
        let mut data = Vec::with_capacity(specs.len() * t * f);
        for (i, s) in specs.iter().enumerate() {
            if s.num_frames() != t || s.num_bins() != f {
                return Err(Error::Shape(format!(
                    "input {i} is {}x{}, model expects {t}x{f}",
                    s.num_frames(),
                    s.num_bins()
                )));
            }
            data.extend_from_slice(s.values());
        }
        Tensor::from_vec(&[specs.len(), t, f, 1], data)
    }

    /// Forward through every layer, keeping the activation tape.
    pub(crate) fn forward_tape(&self, input: Tensor) -> Result<Vec<Tensor>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input);
        for layer in &self.layers {
            let next = layer.forward(acts.last().expect("tape is never empty"))?;
            acts.push(next);
        }
        Ok(acts)
    }

    /// Backward pass over a tape; parameter gradients accumulate.
    pub(crate) fn backward_tape(&mut self, acts: &[Tensor], grad_logits: Tensor) -> Result<()> {
        let mut grad = grad_logits;
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            grad = layer.backward(&acts[i], &grad)?;
        }
        Ok(())
    }

    pub(crate) fn zero_grads(&mut self) {
        for p in self.parameters_mut() {
            p.zero_grad();
        }
    }

    /// Class logits for a batch of spectrograms.
    pub fn logits(&self, specs: &[&Spectrogram]) -> Result<Tensor> {
        let tape = self.forward_tape(self.input_tensor(specs)?)?;
        Ok(tape.into_iter().last().expect("tape is never empty"))
    }

    /// Penultimate-layer activations (post-SELU): N x embedding_units.
    pub fn extract_features(&self, specs: &[&Spectrogram]) -> Result<Tensor> {
        let mut act = self.input_tensor(specs)?;
        for layer in &self.layers[..self.layers.len() - 1] {
            act = layer.forward(&act)?;
        }
        Ok(act)
    }

    /// Argmax class index per row.
    pub fn predict(&self, specs: &[&Spectrogram]) -> Result<Vec<usize>> {
        let logits = self.logits(specs)?;
        let k = self.spec.num_classes;
        Ok(logits
            .data()
            .chunks(k)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite logits"))
                    .map(|(i, _)| i)
                    .expect("non-empty row")
            })
            .collect())
    }

    pub fn class_index(&self, word: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == word)
    }

    /// Snapshot of all parameter values, for best-epoch checkpointing.
    pub(crate) fn snapshot(&self) -> Vec<Tensor> {
        self.parameters().iter().map(|p| p.value.clone()).collect()
    }

    pub(crate) fn restore(&mut self, snapshot: &[Tensor]) {
        for (p, s) in self.parameters_mut().into_iter().zip(snapshot) {
            p.value = s.clone();
        }
    }

    pub fn save<P: AsRef<std::path::Path>>(&self, path: P) -> Result<()> {
        io::save_model(self, path)
    }

    pub fn load<P: AsRef<std::path::Path>>(path: P) -> Result<Self> {
        io::load_model(path)
    }
}

/// Standard class list for a keyword set: background first, then the
/// keywords in sorted order.
pub fn class_list(keywords: &[String]) -> Vec<String> {
    let mut sorted: Vec<String> = keywords.to_vec();
    sorted.sort();
    sorted.dedup();
    let mut classes = Vec::with_capacity(sorted.len() + 1);
    classes.push(BACKGROUND_CLASS.to_string());
    classes.extend(sorted);
    classes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{compute_spectrogram, AudioBuffer, DEFAULT_SAMPLE_RATE};

    fn desk_classes(n: usize) -> Vec<String> {
        class_list(&(0..n).map(|i| format!("kw{i:02}")).collect::<Vec<_>>())
    }

    fn tone_spec(freq: f64, amp: f32) -> Spectrogram {
        let samples: Vec<f32> = (0..16000)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 16000.0).sin() as f32)
            .collect();
        let buf = AudioBuffer::new(samples, DEFAULT_SAMPLE_RATE).unwrap();
        compute_spectrogram(&buf, &FrontendConfig::default()).unwrap()
    }

    #[test]
    fn desk_spec_param_count_matches_closed_form() {
        let spec = EmbeddingNetSpec::desk_default(8);
        let model = build_model(&spec, desk_classes(8), &FrontendConfig::default(), 1).unwrap();
        assert_eq!(model.param_count(), spec.param_count());

        // closed form recomputed by hand for the desk default
        let conv = 3 * 3 * (16 + 16 * 16 + 16 * 32 + 32 * 32 + 32 * 64 + 64 * 64);
        let dense = 64 * 128 + 128 + 128 * 128 + 128 + 128 * 64 + 64 + 64 * 9 + 9;
        assert_eq!(spec.param_count(), conv + dense);
    }

    #[test]
    fn minimal_two_class_model_runs_forward() {
        let spec = EmbeddingNetSpec {
            trunk: vec![ConvStage { filters: 4, kernel: 3, stride: 2 }],
            dense_units: vec![],
            embedding_units: 8,
            num_classes: 2,
            input_frames: 49,
            input_bins: 40,
        };
        let classes = vec![BACKGROUND_CLASS.to_string(), "word".to_string()];
        let model = build_model(&spec, classes, &FrontendConfig::default(), 3).unwrap();
        let s = tone_spec(500.0, 0.5);
        let logits = model.logits(&[&s]).unwrap();
        assert_eq!(logits.shape(), &[1, 2]);
        assert!(logits.is_finite());
    }

    #[test]
    fn same_seed_gives_bitwise_identical_initialization() {
        let spec = EmbeddingNetSpec::desk_default(4);
        let a = build_model(&spec, desk_classes(4), &FrontendConfig::default(), 9).unwrap();
        let b = build_model(&spec, desk_classes(4), &FrontendConfig::default(), 9).unwrap();
        for (pa, pb) in a.parameters().iter().zip(b.parameters().iter()) {
            assert_eq!(pa.value, pb.value, "{}", pa.name);
        }
        let c = build_model(&spec, desk_classes(4), &FrontendConfig::default(), 10).unwrap();
        assert_ne!(
            a.parameters()[0].value,
            c.parameters()[0].value,
            "different seeds must differ"
        );
    }

    #[test]
    fn features_are_pure_and_batch_independent() {
        let spec = EmbeddingNetSpec::desk_default(3);
        let model = build_model(&spec, desk_classes(3), &FrontendConfig::default(), 5).unwrap();
        let a = tone_spec(400.0, 0.5);
        let b = tone_spec(900.0, 0.4);
        let c = tone_spec(1800.0, 0.6);

        let solo = model.extract_features(&[&b]).unwrap();
        let batch = model.extract_features(&[&a, &b, &c]).unwrap();
        assert_eq!(solo.shape(), &[1, 64]);
        assert_eq!(batch.shape(), &[3, 64]);
        for i in 0..64 {
            let d = (solo.data()[i] - batch.data()[64 + i]).abs();
            assert!(d < 1e-6, "feature {i} differs by {d}");
        }

        let again = model.extract_features(&[&b]).unwrap();
        assert_eq!(solo, again);
    }

    #[test]
    fn silence_inputs_share_a_feature_row() {
        let spec = EmbeddingNetSpec::desk_default(3);
        let model = build_model(&spec, desk_classes(3), &FrontendConfig::default(), 5).unwrap();
        let silence = AudioBuffer::silence(1.0, DEFAULT_SAMPLE_RATE);
        let s1 = compute_spectrogram(&silence, &FrontendConfig::default()).unwrap();
        let s2 = s1.clone();
        let feats = model.extract_features(&[&s1, &s2]).unwrap();
        assert_eq!(feats.data()[..64], feats.data()[64..]);
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let spec = EmbeddingNetSpec::desk_default(3);
        let model = build_model(&spec, desk_classes(3), &FrontendConfig::default(), 5).unwrap();
        let buf = AudioBuffer::silence(2.0, DEFAULT_SAMPLE_RATE);
        let wrong = compute_spectrogram(&buf, &FrontendConfig::default()).unwrap();
        assert!(model.extract_features(&[&wrong]).is_err());
    }

    #[test]
    fn class_list_puts_background_first() {
        let classes = class_list(&["zeta".into(), "alpha".into()]);
        assert_eq!(classes, vec![BACKGROUND_CLASS.to_string(), "alpha".into(), "zeta".into()]);
        let spec = EmbeddingNetSpec::desk_default(2);
        assert!(build_model(
            &spec,
            vec!["alpha".into(), "zeta".into(), BACKGROUND_CLASS.into()],
            &FrontendConfig::default(),
            0
        )
        .is_err());
    }
}
