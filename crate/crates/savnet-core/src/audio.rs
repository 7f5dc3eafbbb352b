//! Audio front end: WAV loading, resampling, and the fixed log-mel pipeline.
//!
//! Every clip, whatever its length or origin sample rate, comes out as a
//! 1x80x100 log-mel spectrogram: 80 HTK-scale mel bins over 0-8 kHz, 100
//! frames of 25 ms Hann windows hopped every 10 ms at 16 kHz. Longer clips
//! keep their first 100 frames (onsets carry the attribute evidence);
//! shorter ones are padded at the tail with the log floor.

use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::tensor::{Tensor, TensorError};
use crate::wav;

pub const SAMPLE_RATE: u32 = 16_000;
pub const WINDOW: usize = 400;
pub const HOP: usize = 160;
pub const N_FFT: usize = 512;
pub const N_BINS: usize = N_FFT / 2 + 1;
pub const N_MELS: usize = 80;
pub const N_FRAMES: usize = 100;
pub const POWER_FLOOR: f64 = 1e-10;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("wav format error in `{field}`: {detail}")]
    Format { field: &'static str, detail: String },
    #[error("invalid audio clip: {0}")]
    Clip(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// PCM samples in [-1,1] at a known rate.
#[derive(Debug, Clone)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::Clip("empty sample buffer".into()));
        }
        if sample_rate == 0 {
            return Err(AudioError::Clip("zero sample rate".into()));
        }
        if let Some(bad) = samples.iter().position(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(AudioError::Clip(format!(
                "sample {bad} out of range: {}",
                samples[bad]
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Linear-interpolation resample. An input of N samples at half the
    /// target rate yields 2N-1 samples with endpoints preserved.
    pub fn resample(&self, target_rate: u32) -> Self {
        if self.sample_rate == target_rate {
            return self.clone();
        }
        let n = self.samples.len();
        let ratio = self.sample_rate as f64 / target_rate as f64;
        let last = ((n - 1) as f64 / ratio).floor() as usize;
        let mut out = Vec::with_capacity(last + 1);
        for j in 0..=last {
            let pos = j as f64 * ratio;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            let v = if i + 1 < n {
                self.samples[i] * (1.0 - frac) + self.samples[i + 1] * frac
            } else {
                self.samples[i]
            };
            out.push(v.clamp(-1.0, 1.0));
        }
        Self {
            samples: out,
            sample_rate: target_rate,
        }
    }
}

/// Load a PCM-16 mono WAV and bring it to the canonical 16 kHz rate.
pub fn load_wav(path: &Path) -> Result<AudioClip, AudioError> {
    let (samples, rate) = wav::read_wav(path)?;
    let clip = AudioClip::new(samples, rate)?;
    Ok(clip.resample(SAMPLE_RATE))
}

/// The fixed 1x80x100 log-mel representation consumed by the model.
#[derive(Debug, Clone)]
pub struct MelSpectrogram {
    values: Tensor,
    source_id: String,
}

impl MelSpectrogram {
    pub fn new(values: Tensor, source_id: String) -> Result<Self, AudioError> {
        if values.dims() != [1, N_MELS, N_FRAMES] {
            return Err(AudioError::Clip(format!(
                "mel spectrogram must be [1, {N_MELS}, {N_FRAMES}], got {:?}",
                values.dims()
            )));
        }
        let floor = POWER_FLOOR.ln();
        if values.data().iter().any(|&v| v < floor) {
            return Err(AudioError::Clip(format!(
                "log-mel value below floor {floor}"
            )));
        }
        Ok(Self { values, source_id })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }
}

/// Triangular filter response with peak 1 at `mid`.
fn tri_weight(f: f64, lo: f64, mid: f64, hi: f64) -> f64 {
    if f <= lo || f >= hi {
        0.0
    } else if f <= mid {
        (f - lo) / (mid - lo)
    } else {
        (hi - f) / (hi - mid)
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// 80 triangular HTK-mel filters over 0-8000 Hz, sampled at the FFT bin
/// centers. Un-normalized: each triangle peaks at weight 1.
pub struct MelFilterbank {
    /// Row-major [N_MELS, N_BINS].
    weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn new() -> Result<Self, AudioError> {
        let f_max = SAMPLE_RATE as f64 / 2.0;
        let mel_max = hz_to_mel(f_max);
        let edges: Vec<f64> = (0..N_MELS + 2)
            .map(|i| mel_to_hz(mel_max * i as f64 / (N_MELS + 1) as f64))
            .collect();
        let bin_hz = SAMPLE_RATE as f64 / N_FFT as f64;
        let mut weights = vec![0.0; N_MELS * N_BINS];
        for m in 0..N_MELS {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let row = &mut weights[m * N_BINS..(m + 1) * N_BINS];
            let mut any = false;
            for (k, w) in row.iter_mut().enumerate() {
                *w = tri_weight(k as f64 * bin_hz, lo, mid, hi);
                any |= *w > 0.0;
            }
            if !any {
                return Err(AudioError::Clip(format!(
                    "mel filter {m} covers no FFT bin ({lo:.1}-{hi:.1} Hz)"
                )));
            }
        }
        Ok(Self { weights })
    }

    /// Matrix product filterbank x power: [N_MELS,T] from [N_BINS,T].
    pub fn project(&self, power: &Tensor) -> Result<Tensor, TensorError> {
        let dims = power.dims();
        if dims.len() != 2 || dims[0] != N_BINS {
            return Err(crate::tensor::shape_err(
                "mel_project",
                format!("expected [{N_BINS}, T], got {dims:?}"),
            ));
        }
        let t = dims[1];
        let p = power.data();
        let mut out = vec![0.0; N_MELS * t];
        for m in 0..N_MELS {
            let row = &self.weights[m * N_BINS..(m + 1) * N_BINS];
            let dst = &mut out[m * t..(m + 1) * t];
            for (k, &w) in row.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let src = &p[k * t..(k + 1) * t];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
        Tensor::new(vec![N_MELS, t], out)
    }

    #[cfg(test)]
    fn row(&self, m: usize) -> &[f64] {
        &self.weights[m * N_BINS..(m + 1) * N_BINS]
    }
}

/// Shared front end: filterbank built once, FFT plan reused across clips.
pub struct FrontEnd {
    filterbank: MelFilterbank,
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
}

impl FrontEnd {
    pub fn new() -> Result<Self, AudioError> {
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(N_FFT);
        let window = (0..WINDOW)
            .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / WINDOW as f64).cos()))
            .collect();
        Ok(Self {
            filterbank: MelFilterbank::new()?,
            fft,
            window,
        })
    }

    /// Power spectrogram [N_BINS, T] with T = 1 + floor((len-400)/160).
    /// Clips shorter than one window are zero-padded to exactly one frame.
    pub fn stft(&self, clip: &AudioClip) -> Result<Tensor, AudioError> {
        let mut samples = clip.samples().to_vec();
        if samples.len() < WINDOW {
            samples.resize(WINDOW, 0.0);
        }
        let t = 1 + (samples.len() - WINDOW) / HOP;
        let mut power = vec![0.0; N_BINS * t];
        let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
        for frame in 0..t {
            let src = &samples[frame * HOP..frame * HOP + WINDOW];
            for (b, (&s, &w)) in buf.iter_mut().zip(src.iter().zip(&self.window)) {
                *b = Complex::new(s * w, 0.0);
            }
            for b in buf.iter_mut().skip(WINDOW) {
                *b = Complex::new(0.0, 0.0);
            }
            self.fft.process(&mut buf);
            for k in 0..N_BINS {
                power[k * t + frame] = buf[k].norm_sqr();
            }
        }
        Ok(Tensor::new(vec![N_BINS, t], power)?)
    }

    /// Full pipeline: stft, mel projection, log compression, cut/pad to the
    /// fixed frame count.
    pub fn process(&self, clip: &AudioClip, source_id: &str) -> Result<MelSpectrogram, AudioError> {
        let power = self.stft(clip)?;
        let mel = self.filterbank.project(&power)?;
        finalize(&mel, source_id)
    }
}

/// Log-compress with floor 1e-10 and fix the frame count at 100: longer
/// inputs keep their head, shorter ones get log-floor padding at the tail.
pub fn finalize(mel: &Tensor, source_id: &str) -> Result<MelSpectrogram, AudioError> {
    let dims = mel.dims();
    if dims.len() != 2 || dims[0] != N_MELS {
        return Err(AudioError::Clip(format!(
            "expected [{N_MELS}, T] mel matrix, got {dims:?}"
        )));
    }
    let t = dims[1];
    let pad = POWER_FLOOR.ln();
    let src = mel.data();
    let mut out = vec![pad; N_MELS * N_FRAMES];
    for m in 0..N_MELS {
        for f in 0..t.min(N_FRAMES) {
            out[m * N_FRAMES + f] = src[m * t + f].max(POWER_FLOOR).ln();
        }
    }
    let values = Tensor::new(vec![1, N_MELS, N_FRAMES], out)?;
    MelSpectrogram::new(values, source_id.to_string())
}

/// Index of the mel bin with the greatest mean energy, the statistic used
/// by the pure-tone frontend checks.
pub fn dominant_mel_bin(spec: &MelSpectrogram) -> usize {
    let data = spec.values().data();
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for m in 0..N_MELS {
        let mean: f64 = data[m * N_FRAMES..(m + 1) * N_FRAMES].iter().sum::<f64>();
        if mean > best {
            best = mean;
            arg = m;
        }
    }
    arg
}
