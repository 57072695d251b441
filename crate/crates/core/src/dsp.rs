//! Log-mel feature extraction: framed STFT, HTK mel filterbank, log
//! compression and per-patch CMVN, producing the 100×64 embedder input.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use thiserror::Error;

use crate::audio::{Segment, SAMPLE_RATE, SEGMENT_LEN};

pub const WIN_LENGTH: usize = 400;
pub const HOP_LENGTH: usize = 160;
pub const N_FFT: usize = 512;
pub const N_BINS: usize = N_FFT / 2 + 1;
pub const N_FRAMES: usize = 100;
pub const N_MELS: usize = 64;
pub const F_MIN: f64 = 20.0;
pub const F_MAX: f64 = 8000.0;
/// Added to mel energies before the log.
pub const LOG_EPSILON: f64 = 1e-6;
/// Lower bound on the per-bin standard deviation used by [`cmvn`].
pub const CMVN_STD_FLOOR: f64 = 1e-4;

#[derive(Debug, Error, PartialEq)]
pub enum DspError {
    #[error("invalid filterbank range: {0}")]
    InvalidRange(String),
    #[error("expected a {expected}-value patch, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Row-major `frames × bins` magnitude spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: usize,
    pub bins: usize,
    pub values: Vec<f64>,
}

impl Spectrogram {
    pub fn frame(&self, t: usize) -> &[f64] {
        &self.values[t * self.bins..(t + 1) * self.bins]
    }
}

/// Triangular mel filters evaluated at FFT bin center frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub n_fft: usize,
    pub sample_rate: u32,
    /// Row-major `n_mels × (n_fft/2 + 1)`.
    pub weights: Vec<f64>,
}

impl MelFilterbank {
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn filter(&self, m: usize) -> &[f64] {
        let n = self.n_bins();
        &self.weights[m * n..(m + 1) * n]
    }

    /// Center frequencies (Hz) of each filter.
    pub fn centers_hz(&self) -> Vec<f64> {
        mel_breaks(self.n_mels, self.f_min, self.f_max)[1..=self.n_mels]
            .iter()
            .map(|&m| mel_to_hz(m))
            .collect()
    }
}

impl Default for MelFilterbank {
    fn default() -> Self {
        build_filterbank(N_MELS, F_MIN, F_MAX, N_FFT, SAMPLE_RATE).expect("default range is valid")
    }
}

fn mel_breaks(n_mels: usize, f_min: f64, f_max: f64) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
    (0..n_mels + 2)
        .map(|i| lo + (hi - lo) * i as f64 / (n_mels + 1) as f64)
        .collect()
}

pub fn build_filterbank(
    n_mels: usize,
    f_min: f64,
    f_max: f64,
    n_fft: usize,
    sample_rate: u32,
) -> Result<MelFilterbank, DspError> {
    let nyquist = sample_rate as f64 / 2.0;
    if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
        return Err(DspError::InvalidRange(format!(
            "need 0 <= f_min < f_max <= {nyquist}, got [{f_min}, {f_max}]"
        )));
    }
    if n_mels == 0 || n_fft < 2 {
        return Err(DspError::InvalidRange(format!(
            "n_mels={n_mels}, n_fft={n_fft}"
        )));
    }
    let n_bins = n_fft / 2 + 1;
    let mut breaks_hz: Vec<f64> = mel_breaks(n_mels, f_min, f_max)
        .into_iter()
        .map(mel_to_hz)
        .collect();
    // The mel round trip is inexact; pin the outer edges.
    breaks_hz[0] = f_min;
    breaks_hz[n_mels + 1] = f_max;
    let mut weights = vec![0.0; n_mels * n_bins];
    for m in 0..n_mels {
        let (left, center, right) = (breaks_hz[m], breaks_hz[m + 1], breaks_hz[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * sample_rate as f64 / n_fft as f64;
            let w = if f > left && f <= center {
                (f - left) / (center - left)
            } else if f > center && f < right {
                (right - f) / (right - center)
            } else {
                0.0
            };
            weights[m * n_bins + k] = w;
        }
    }
    Ok(MelFilterbank {
        n_mels,
        f_min,
        f_max,
        n_fft,
        sample_rate,
        weights,
    })
}

/// Periodic Hann window.
pub fn hann_window(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / len as f64).cos())
        .collect()
}

fn reflect_index(i: isize, len: usize) -> usize {
    let n = len as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

/// A 100×64 (frames × mel bins) row-major feature patch.
#[derive(Debug, Clone, PartialEq)]
pub struct LogMelPatch {
    values: Vec<f32>,
}

impl LogMelPatch {
    pub const LEN: usize = N_FRAMES * N_MELS;

    pub fn from_values(values: Vec<f32>) -> Result<Self, DspError> {
        if values.len() != Self::LEN {
            return Err(DspError::ShapeMismatch {
                expected: Self::LEN,
                got: values.len(),
            });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, frame: usize, mel: usize) -> f32 {
        self.values[frame * N_MELS + mel]
    }

    /// Raw little-endian float32 blob, row-major.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.values.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    /// Writes `<stem>.f32` and a `<stem>.txt` sidecar describing the layout.
    pub fn export(&self, dir: impl AsRef<Path>, stem: &str, source: &str) -> std::io::Result<()> {
        let dir = dir.as_ref();
        std::fs::write(dir.join(format!("{stem}.f32")), self.to_le_bytes())?;
        let mut manifest = String::new();
        let _ = writeln!(manifest, "file\t{stem}.f32");
        let _ = writeln!(manifest, "dtype\tfloat32-le");
        let _ = writeln!(manifest, "layout\trow-major");
        let _ = writeln!(manifest, "shape\t{N_FRAMES}x{N_MELS}");
        let _ = writeln!(manifest, "axes\tframe,mel");
        let _ = writeln!(manifest, "source\t{source}");
        std::fs::write(dir.join(format!("{stem}.txt")), manifest)
    }
}

/// Reusable STFT + filterbank pipeline. Immutable and shareable across threads.
#[derive(Clone)]
pub struct FeatureExtractor {
    fb: MelFilterbank,
    /// Nonzero bin range of each filter.
    spans: Vec<std::ops::Range<usize>>,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FeatureExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeatureExtractor")
            .field("n_mels", &self.fb.n_mels)
            .finish()
    }
}

impl Default for FeatureExtractor {
    fn default() -> Self {
        Self::new(MelFilterbank::default())
    }
}

impl FeatureExtractor {
    pub fn new(fb: MelFilterbank) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(N_FFT);
        let spans = (0..fb.n_mels).map(|m| filter_span(fb.filter(m))).collect();
        Self {
            fb,
            spans,
            window: hann_window(WIN_LENGTH),
            fft,
        }
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.fb
    }

    /// Hann-windowed 400/160 framing with 200-sample reflect padding; the
    /// first 100 frames (centers at 0, 160, …, 15840) are kept.
    pub fn stft_magnitude(&self, segment: &Segment) -> Spectrogram {
        let x = segment.samples();
        debug_assert_eq!(x.len(), SEGMENT_LEN);
        let pad = (WIN_LENGTH / 2) as isize;
        let mut buf = vec![Complex::new(0.0, 0.0); N_FFT];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut values = Vec::with_capacity(N_FRAMES * N_BINS);
        for t in 0..N_FRAMES {
            let start = (t * HOP_LENGTH) as isize - pad;
            for (n, slot) in buf.iter_mut().enumerate() {
                *slot = if n < WIN_LENGTH {
                    let s = x[reflect_index(start + n as isize, x.len())] as f64;
                    Complex::new(s * self.window[n], 0.0)
                } else {
                    Complex::new(0.0, 0.0)
                };
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            values.extend(buf[..N_BINS].iter().map(|c| c.norm()));
        }
        Spectrogram {
            frames: N_FRAMES,
            bins: N_BINS,
            values,
        }
    }

    /// `ln(fb · |STFT|² + ε)` without normalization.
    pub fn log_mel_patch(&self, segment: &Segment) -> LogMelPatch {
        let spec = self.stft_magnitude(segment);
        let mut values = Vec::with_capacity(spec.frames * self.fb.n_mels);
        let mut power = vec![0.0; spec.bins];
        for t in 0..spec.frames {
            for (p, &mag) in power.iter_mut().zip(spec.frame(t)) {
                *p = mag * mag;
            }
            for (m, span) in self.spans.iter().enumerate() {
                let energy: f64 = self.fb.filter(m)[span.clone()]
                    .iter()
                    .zip(&power[span.clone()])
                    .map(|(w, p)| w * p)
                    .sum();
                values.push((energy + LOG_EPSILON).ln() as f32);
            }
        }
        LogMelPatch { values }
    }

    /// The full model-input path: log-mel followed by CMVN.
    pub fn extract(&self, segment: &Segment) -> LogMelPatch {
        cmvn(&self.log_mel_patch(segment))
    }
}

pub fn stft_magnitude(segment: &Segment) -> Spectrogram {
    FeatureExtractor::default().stft_magnitude(segment)
}

pub fn log_mel_patch(segment: &Segment, fb: &MelFilterbank) -> LogMelPatch {
    FeatureExtractor::new(fb.clone()).log_mel_patch(segment)
}

fn filter_span(weights: &[f64]) -> std::ops::Range<usize> {
    match weights.iter().position(|&w| w > 0.0) {
        Some(lo) => {
            let hi = weights.iter().rposition(|&w| w > 0.0).unwrap_or(lo);
            lo..hi + 1
        }
        None => 0..0,
    }
}

/// Per mel bin across the 100 frames: subtract the mean and divide by
/// `max(std, 1e-4)`, with the sample (n−1) standard deviation.
pub fn cmvn(patch: &LogMelPatch) -> LogMelPatch {
    let mut out = vec![0.0f32; LogMelPatch::LEN];
    for m in 0..N_MELS {
        let column = (0..N_FRAMES).map(|t| patch.values[t * N_MELS + m] as f64);
        let mean = column.clone().sum::<f64>() / N_FRAMES as f64;
        let var = column.map(|v| (v - mean) * (v - mean)).sum::<f64>() / (N_FRAMES - 1) as f64;
        let std = var.sqrt().max(CMVN_STD_FLOOR);
        for t in 0..N_FRAMES {
            let v = patch.values[t * N_MELS + m] as f64;
            out[t * N_MELS + m] = ((v - mean) / std) as f32;
        }
    }
    LogMelPatch { values: out }
}
