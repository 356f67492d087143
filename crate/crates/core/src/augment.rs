//! Training-time augmentations: time shifts, background-noise mixing, and
//! spectrogram time/frequency masking.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::audio::{AudioBuffer, Spectrogram};
use crate::error::{Error, Result};

/// Augmentation parameters.
///
/// `noise_level` caps the noise-to-signal RMS ratio; the realized ratio per
/// sample is drawn uniformly in [0, noise_level].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub max_shift_ms: f64,
    pub noise_level: f64,
    pub noise_prob: f64,
    pub spec_time_masks: usize,
    pub spec_time_mask_max_frames: usize,
    pub spec_freq_masks: usize,
    pub spec_freq_mask_max_bins: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            max_shift_ms: 100.0,
            noise_level: 0.10,
            noise_prob: 0.8,
            spec_time_masks: 2,
            spec_time_mask_max_frames: 7,
            spec_freq_masks: 2,
            spec_freq_mask_max_bins: 5,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_shift_ms < 0.0 || self.noise_level < 0.0 {
            return Err(Error::Augment("magnitudes must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.noise_prob) {
            return Err(Error::Augment("noise_prob must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Shift content by `shift_ms` (positive = later), zero-filling the vacated
/// region and truncating overflow. Length is preserved.
pub fn time_shift(buffer: &AudioBuffer, shift_ms: f64, max_shift_ms: f64) -> Result<AudioBuffer> {
    if shift_ms.abs() > max_shift_ms {
        return Err(Error::Augment(format!(
            "shift {shift_ms} ms exceeds configured bound {max_shift_ms} ms"
        )));
    }
    let shift = (shift_ms * f64::from(buffer.sample_rate) / 1000.0).round() as i64;
    Ok(shift_samples(buffer, shift))
}

fn shift_samples(buffer: &AudioBuffer, shift: i64) -> AudioBuffer {
    let n = buffer.len() as i64;
    let mut out = vec![0.0f32; buffer.len()];
    for (i, slot) in out.iter_mut().enumerate() {
        let src = i as i64 - shift;
        if src >= 0 && src < n {
            *slot = buffer.samples[src as usize];
        }
    }
    AudioBuffer {
        samples: out,
        sample_rate: buffer.sample_rate,
    }
}

/// Deterministic core of noise mixing: add a wrapping crop of `noise`
/// starting at `offset`, scaled so its RMS is `u * level * RMS(signal)`.
/// Output is clamped to [-1, 1]. A silent signal stays silent.
pub fn mix_noise_parts(
    signal: &AudioBuffer,
    noise: &AudioBuffer,
    level: f64,
    u: f64,
    offset: usize,
) -> Result<AudioBuffer> {
    if level < 0.0 {
        return Err(Error::Augment("noise level must be >= 0".into()));
    }
    if level == 0.0 {
        return Ok(signal.clone());
    }
    if noise.is_empty() || noise.rms() == 0.0 {
        return Err(Error::Augment("noise source is silent".into()));
    }
    let signal_rms = signal.rms();
    if signal_rms == 0.0 {
        return Ok(signal.clone());
    }

    let n = signal.len();
    let mut crop = Vec::with_capacity(n);
    for i in 0..n {
        crop.push(noise.samples[(offset + i) % noise.len()]);
    }
    let crop_sq: f64 = crop.iter().map(|&s| f64::from(s) * f64::from(s)).sum();
    let crop_rms = (crop_sq / n as f64).sqrt();
    let gain = if crop_rms == 0.0 {
        0.0
    } else {
        (u * level * signal_rms / crop_rms) as f32
    };

    let samples = signal
        .samples
        .iter()
        .zip(&crop)
        .map(|(&s, &c)| (s + gain * c).clamp(-1.0, 1.0))
        .collect();
    Ok(AudioBuffer {
        samples,
        sample_rate: signal.sample_rate,
    })
}

/// Mix a random crop of `noise` into `signal` at a random fraction of
/// `level` (noise-to-signal RMS ratio), seed-deterministic.
pub fn mix_noise(signal: &AudioBuffer, noise: &AudioBuffer, level: f64, seed: u64) -> Result<AudioBuffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mix_noise_rng(signal, noise, level, &mut rng)
}

pub(crate) fn mix_noise_rng(
    signal: &AudioBuffer,
    noise: &AudioBuffer,
    level: f64,
    rng: &mut ChaCha8Rng,
) -> Result<AudioBuffer> {
    if level == 0.0 {
        return Ok(signal.clone());
    }
    if noise.is_empty() {
        return Err(Error::Augment("noise source is empty".into()));
    }
    let u: f64 = rng.gen_range(0.0..=1.0);
    let offset = rng.gen_range(0..noise.len());
    mix_noise_parts(signal, noise, level, u, offset)
}

/// Replace random time/frequency bands with the spectrogram mean.
/// Band extents are clamped below the spectrogram dimensions.
pub fn spec_augment(spec: &Spectrogram, cfg: &AugmentConfig, seed: u64) -> Spectrogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    spec_augment_rng(spec, cfg, &mut rng)
}

pub(crate) fn spec_augment_rng(spec: &Spectrogram, cfg: &AugmentConfig, rng: &mut ChaCha8Rng) -> Spectrogram {
    let frames = spec.num_frames();
    let bins = spec.num_bins();
    let mut out = spec.clone();
    if frames == 0 || bins == 0 {
        return out;
    }
    let fill = spec.mean() as f32;

    let max_t = cfg.spec_time_mask_max_frames.min(frames.saturating_sub(1));
    for _ in 0..cfg.spec_time_masks {
        let width = rng.gen_range(0..=max_t);
        if width == 0 {
            continue;
        }
        let start = rng.gen_range(0..=frames - width);
        for t in start..start + width {
            for f in 0..bins {
                out.values_mut()[t * bins + f] = fill;
            }
        }
    }

    let max_f = cfg.spec_freq_mask_max_bins.min(bins.saturating_sub(1));
    for _ in 0..cfg.spec_freq_masks {
        let width = rng.gen_range(0..=max_f);
        if width == 0 {
            continue;
        }
        let start = rng.gen_range(0..=bins - width);
        for t in 0..frames {
            for f in start..start + width {
                out.values_mut()[t * bins + f] = fill;
            }
        }
    }
    out
}

/// Composed waveform augmentation used by the training loops: a uniform
/// random time shift, then background noise with probability `noise_prob`.
pub fn augment_waveform(
    buffer: &AudioBuffer,
    noise: Option<&AudioBuffer>,
    cfg: &AugmentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<AudioBuffer> {
    let shift_ms = if cfg.max_shift_ms > 0.0 {
        rng.gen_range(-cfg.max_shift_ms..=cfg.max_shift_ms)
    } else {
        0.0
    };
    let mut out = time_shift(buffer, shift_ms, cfg.max_shift_ms)?;
    if let Some(noise) = noise {
        if cfg.noise_level > 0.0 && rng.gen_bool(cfg.noise_prob) {
            out = mix_noise_rng(&out, noise, cfg.noise_level, rng)?;
        }
    }
    Ok(out)
}
