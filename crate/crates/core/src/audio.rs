//! Audio I/O and the log-mel spectrogram frontend.
//!
//! All audio in the toolkit is mono f32 PCM in [-1, 1] at 16 kHz. The
//! frontend turns a 1-second buffer into a 49x40 log-mel matrix at the
//! default configuration (30 ms Hann window, 20 ms hop, 40 mel bins
//! spanning 60-7600 Hz, natural log with a 1e-6 floor).

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical sample rate for every model input.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono PCM samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Audio("sample_rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Audio("samples must be finite".into()));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// All-zero buffer of the given duration.
    pub fn silence(duration_s: f64, sample_rate: u32) -> Self {
        let n = (duration_s * f64::from(sample_rate)).round() as usize;
        Self {
            samples: vec![0.0; n],
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Root-mean-square amplitude, accumulated in f64.
    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.samples.iter().map(|&s| f64::from(s) * f64::from(s)).sum();
        (sum / self.samples.len() as f64).sqrt()
    }
}

/// Frontend parameters. Defaults produce 49x40 for one second at 16 kHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    pub num_mel_bins: usize,
    pub mel_low_hz: f64,
    pub mel_high_hz: f64,
    pub log_floor: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            window_ms: 30.0,
            hop_ms: 20.0,
            num_mel_bins: 40,
            mel_low_hz: 60.0,
            mel_high_hz: 7600.0,
            log_floor: 1e-6,
        }
    }
}

impl FrontendConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if !(self.hop_ms > 0.0 && self.window_ms >= self.hop_ms) {
            return Err(Error::Config(format!(
                "window_ms ({}) must be >= hop_ms ({}) > 0",
                self.window_ms, self.hop_ms
            )));
        }
        if self.num_mel_bins < 2 {
            return Err(Error::Config("num_mel_bins must be >= 2".into()));
        }
        let nyquist = f64::from(sample_rate) / 2.0;
        if !(0.0 <= self.mel_low_hz && self.mel_low_hz < self.mel_high_hz && self.mel_high_hz <= nyquist)
        {
            return Err(Error::Config(format!(
                "mel band [{}, {}] must satisfy 0 <= low < high <= {}",
                self.mel_low_hz, self.mel_high_hz, nyquist
            )));
        }
        if !self.log_floor.is_finite() || self.log_floor <= 0.0 {
            return Err(Error::Config("log_floor must be positive".into()));
        }
        Ok(())
    }

    pub fn window_len(&self, sample_rate: u32) -> usize {
        (self.window_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }

    pub fn hop_len(&self, sample_rate: u32) -> usize {
        (self.hop_ms * f64::from(sample_rate) / 1000.0).round() as usize
    }
}

/// Time x frequency matrix of log-mel energies, row-major by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    values: Vec<f32>,
    num_frames: usize,
    num_bins: usize,
    pub frame_hop_ms: f64,
    /// Start of the source span this spectrogram covers, in seconds.
    pub source_start_s: f64,
}

impl Spectrogram {
    pub fn from_values(
        values: Vec<f32>,
        num_frames: usize,
        num_bins: usize,
        frame_hop_ms: f64,
    ) -> Result<Self> {
        if values.len() != num_frames * num_bins {
            return Err(Error::Shape(format!(
                "spectrogram values {} != {} frames x {} bins",
                values.len(),
                num_frames,
                num_bins
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Audio("spectrogram values must be finite".into()));
        }
        Ok(Self {
            values,
            num_frames,
            num_bins,
            frame_hop_ms,
            source_start_s: 0.0,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn num_bins(&self) -> usize {
        self.num_bins
    }

    pub fn at(&self, frame: usize, bin: usize) -> f32 {
        self.values[frame * self.num_bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[f32] {
        &self.values[frame * self.num_bins..(frame + 1) * self.num_bins]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    /// Mean over all cells, accumulated in f64.
    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.values.iter().map(|&v| f64::from(v)).sum();
        sum / self.values.len() as f64
    }
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Center frequencies (Hz) of the triangular mel filters for a config.
///
/// Exposed so tests can locate which bin a pure tone should excite.
pub fn mel_filter_centers(cfg: &FrontendConfig) -> Vec<f64> {
    let mel_lo = hz_to_mel(cfg.mel_low_hz);
    let mel_hi = hz_to_mel(cfg.mel_high_hz);
    let n = cfg.num_mel_bins;
    (1..=n)
        .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n + 1) as f64))
        .collect()
}

/// Dense triangular filterbank over FFT magnitude bins.
#[derive(Debug, Clone)]
struct MelFilterbank {
    /// Per mel bin: (first fft bin, weights).
    filters: Vec<(usize, Vec<f64>)>,
}

impl MelFilterbank {
    fn build(cfg: &FrontendConfig, sample_rate: u32, fft_len: usize) -> Self {
        let n_freqs = fft_len / 2 + 1;
        let mel_lo = hz_to_mel(cfg.mel_low_hz);
        let mel_hi = hz_to_mel(cfg.mel_high_hz);
        let n = cfg.num_mel_bins;
        // n+2 edge frequencies evenly spaced on the mel scale
        let edges: Vec<f64> = (0..n + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n + 1) as f64))
            .collect();
        let bin_hz = f64::from(sample_rate) / fft_len as f64;

        let mut filters = Vec::with_capacity(n);
        for m in 0..n {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut first = None;
            let mut weights = Vec::new();
            for k in 0..n_freqs {
                let f = k as f64 * bin_hz;
                let w = if f <= lo || f >= hi {
                    0.0
                } else if f <= center {
                    (f - lo) / (center - lo)
                } else {
                    (hi - f) / (hi - center)
                };
                if w > 0.0 {
                    if first.is_none() {
                        first = Some(k);
                    }
                    weights.push(w);
                } else if first.is_some() {
                    break;
                }
            }
            filters.push((first.unwrap_or(0), weights));
        }
        Self { filters }
    }

    fn apply(&self, magnitudes: &[f64], log_floor: f64, out: &mut [f32]) {
        for (m, (first, weights)) in self.filters.iter().enumerate() {
            let mut energy = 0.0f64;
            for (j, &w) in weights.iter().enumerate() {
                energy += w * magnitudes[first + j];
            }
            out[m] = (energy + log_floor).ln() as f32;
        }
    }
}

/// Reusable spectrogram pipeline: Hann window, FFT plan, and filterbank
/// built once per (config, sample rate).
pub struct SpectrogramExtractor {
    cfg: FrontendConfig,
    sample_rate: u32,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    filterbank: MelFilterbank,
}

impl SpectrogramExtractor {
    pub fn new(cfg: &FrontendConfig, sample_rate: u32) -> Result<Self> {
        cfg.validate(sample_rate)?;
        let win_len = cfg.window_len(sample_rate);
        if win_len == 0 {
            return Err(Error::Config("window shorter than one sample".into()));
        }
        let window: Vec<f64> = (0..win_len)
            .map(|n| 0.5 * (1.0 - (2.0 * PI * n as f64 / win_len as f64).cos()))
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(win_len);
        let filterbank = MelFilterbank::build(cfg, sample_rate, win_len);
        Ok(Self {
            cfg: cfg.clone(),
            sample_rate,
            window,
            fft,
            filterbank,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.cfg
    }

    /// Frame count for a buffer of `num_samples`: floor((N - W) / H) + 1.
    pub fn num_frames(&self, num_samples: usize) -> Result<usize> {
        let w = self.cfg.window_len(self.sample_rate);
        let h = self.cfg.hop_len(self.sample_rate);
        if num_samples < w {
            return Err(Error::Audio(format!(
                "buffer of {num_samples} samples is shorter than one {w}-sample window"
            )));
        }
        Ok((num_samples - w) / h + 1)
    }

    pub fn compute(&self, samples: &[f32]) -> Result<Spectrogram> {
        let w = self.cfg.window_len(self.sample_rate);
        let h = self.cfg.hop_len(self.sample_rate);
        let frames = self.num_frames(samples.len())?;
        let bins = self.cfg.num_mel_bins;
        let n_freqs = w / 2 + 1;

        let mut values = vec![0.0f32; frames * bins];
        let mut fft_buf = vec![Complex::new(0.0f64, 0.0f64); w];
        let mut scratch = vec![Complex::new(0.0f64, 0.0f64); self.fft.get_inplace_scratch_len()];
        let mut magnitudes = vec![0.0f64; n_freqs];

        for t in 0..frames {
            let start = t * h;
            for i in 0..w {
                fft_buf[i] = Complex::new(f64::from(samples[start + i]) * self.window[i], 0.0);
            }
            self.fft.process_with_scratch(&mut fft_buf, &mut scratch);
            for (k, mag) in magnitudes.iter_mut().enumerate() {
                *mag = fft_buf[k].norm();
            }
            self.filterbank.apply(
                &magnitudes,
                self.cfg.log_floor,
                &mut values[t * bins..(t + 1) * bins],
            );
        }

        Spectrogram::from_values(values, frames, bins, self.cfg.hop_ms)
    }
}

/// One-shot spectrogram computation; builds the pipeline each call.
pub fn compute_spectrogram(buffer: &AudioBuffer, cfg: &FrontendConfig) -> Result<Spectrogram> {
    SpectrogramExtractor::new(cfg, buffer.sample_rate)?.compute(&buffer.samples)
}

/// Linear-interpolation resampler.
pub fn resample_linear(samples: &[f32], from_rate: u32, to_rate: u32) -> Vec<f32> {
    if from_rate == to_rate || samples.is_empty() {
        return samples.to_vec();
    }
    let n_out = (samples.len() as u64 * u64::from(to_rate) / u64::from(from_rate)) as usize;
    let step = f64::from(from_rate) / f64::from(to_rate);
    let mut out = Vec::with_capacity(n_out);
    for i in 0..n_out {
        let pos = i as f64 * step;
        let idx = pos.floor() as usize;
        let frac = (pos - idx as f64) as f32;
        let a = samples[idx.min(samples.len() - 1)];
        let b = samples[(idx + 1).min(samples.len() - 1)];
        out.push(a + (b - a) * frac);
    }
    out
}

/// Read a WAV file into a normalized mono 16 kHz buffer.
///
/// Accepts 16-bit integer or 32-bit float PCM; multi-channel input is
/// downmixed by averaging. Other rates are linearly resampled.
pub fn load_audio<P: AsRef<Path>>(path: P) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    let raw: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| f32::from(v) / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(Error::Audio(format!(
                "{}: unsupported wav codec {fmt:?}/{bits}-bit (want 16-bit int or 32-bit float)",
                path.display()
            )))
        }
    };
    if raw.is_empty() {
        return Err(Error::Audio(format!("{}: zero-length audio", path.display())));
    }
    let channels = spec.channels as usize;
    let mono: Vec<f32> = if channels == 1 {
        raw
    } else {
        raw.chunks(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };
    let samples = resample_linear(&mono, spec.sample_rate, DEFAULT_SAMPLE_RATE);
    AudioBuffer::new(samples, DEFAULT_SAMPLE_RATE)
}

fn quantize_i16(x: f32) -> i16 {
    let v = (f64::from(x) * 32768.0).round();
    v.clamp(-32768.0, 32767.0) as i16
}

/// Write a buffer as 16-bit PCM little-endian WAV.
pub fn save_audio<P: AsRef<Path>>(buffer: &AudioBuffer, path: P) -> Result<()> {
    if buffer.samples.iter().any(|s| !s.is_finite()) {
        return Err(Error::Audio("cannot save non-finite samples".into()));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: buffer.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &buffer.samples {
        writer.write_sample(quantize_i16(s))?;
    }
    writer.finalize()?;
    Ok(())
}

/// Overlapping fixed-length windows at a fixed stride.
///
/// Yields `(start_time_s, window_samples)` with start times at exact
/// multiples of the stride; a trailing partial window is dropped. A buffer
/// shorter than one window yields nothing.
pub fn frame_stream(
    buffer: &AudioBuffer,
    window_s: f64,
    stride_s: f64,
) -> Result<impl Iterator<Item = (f64, &[f32])> + '_> {
    if stride_s <= 0.0 {
        return Err(Error::Audio("stride must be positive".into()));
    }
    if window_s <= 0.0 {
        return Err(Error::Audio("window must be positive".into()));
    }
    let sr = f64::from(buffer.sample_rate);
    let win = (window_s * sr).round() as usize;
    let stride = (stride_s * sr).round() as usize;
    if stride == 0 || win == 0 {
        return Err(Error::Audio("window/stride shorter than one sample".into()));
    }
    let count = if buffer.len() >= win {
        (buffer.len() - win) / stride + 1
    } else {
        0
    };
    let samples = &buffer.samples;
    Ok((0..count).map(move |i| {
        let start = i * stride;
        (start as f64 / sr, &samples[start..start + win])
    }))
}
