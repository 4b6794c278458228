//! 80-bin log-mel filterbank features.
//!
//! Frames are 400 samples (25 ms) with a 160-sample (10 ms) hop, Hamming
//! windowed and zero-padded to a 512-point FFT. The power spectrum is
//! weighted by triangular filters spaced evenly on the HTK mel scale between
//! 20 Hz and 7600 Hz (peak weight 1, no area normalisation), floored at
//! [`POWER_FLOOR`] and passed through the natural log. There is no dither,
//! pre-emphasis or mean normalisation.

use std::f64::consts::PI;
use std::sync::Arc;

use mgff_core::{FeatureMatrix, Tensor, FEATURE_DIM};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::wav::{AudioSignal, SAMPLE_RATE};

pub const WINDOW_SAMPLES: usize = 400;
pub const HOP_SAMPLES: usize = 160;
pub const FFT_SIZE: usize = 512;
pub const LOW_HZ: f64 = 20.0;
pub const HIGH_HZ: f64 = 7600.0;
pub const POWER_FLOOR: f64 = 1e-10;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Frames produced for `num_samples` samples, or `None` below one window.
pub fn num_frames(num_samples: usize) -> Option<usize> {
    (num_samples >= WINDOW_SAMPLES).then(|| 1 + (num_samples - WINDOW_SAMPLES) / HOP_SAMPLES)
}

/// One triangular filter: weights for FFT bins `start..start + weights.len()`.
#[derive(Debug, Clone)]
struct MelFilter {
    start: usize,
    weights: Vec<f64>,
}

/// Reusable extractor holding the window, filter bank and FFT plan.
#[derive(Clone)]
pub struct FbankExtractor {
    window: Vec<f64>,
    filters: Vec<MelFilter>,
    centres: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FbankExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FbankExtractor")
            .field("bins", &self.filters.len())
            .finish()
    }
}

impl Default for FbankExtractor {
    fn default() -> Self {
        Self::new()
    }
}

impl FbankExtractor {
    pub fn new() -> Self {
        let window = (0..WINDOW_SAMPLES)
            .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (WINDOW_SAMPLES - 1) as f64).cos())
            .collect();
        let (lo, hi) = (hz_to_mel(LOW_HZ), hz_to_mel(HIGH_HZ));
        let step = (hi - lo) / (FEATURE_DIM + 1) as f64;
        let edges: Vec<f64> = (0..FEATURE_DIM + 2).map(|i| lo + step * i as f64).collect();
        let bin_hz = SAMPLE_RATE as f64 / FFT_SIZE as f64;
        let filters = edges
            .windows(3)
            .map(|e| {
                let (left, centre, right) = (e[0], e[1], e[2]);
                let weight = |k: usize| {
                    let m = hz_to_mel(k as f64 * bin_hz);
                    if m > left && m <= centre {
                        (m - left) / (centre - left)
                    } else if m > centre && m < right {
                        (right - m) / (right - centre)
                    } else {
                        0.0
                    }
                };
                let bins: Vec<usize> = (0..=FFT_SIZE / 2).filter(|&k| weight(k) > 0.0).collect();
                let start = bins.first().copied().unwrap_or(0);
                let end = bins.last().map_or(start, |&k| k + 1);
                MelFilter {
                    start,
                    weights: (start..end).map(weight).collect(),
                }
            })
            .collect();
        let centres = edges[1..=FEATURE_DIM]
            .iter()
            .map(|&m| mel_to_hz(m))
            .collect();
        Self {
            window,
            filters,
            centres,
            fft: FftPlanner::new().plan_fft_forward(FFT_SIZE),
        }
    }

    /// Centre frequency of each mel bin in Hz.
    pub fn centre_frequencies(&self) -> &[f64] {
        &self.centres
    }

    /// Number of FFT bins with non-zero weight in each filter.
    pub fn filter_widths(&self) -> Vec<usize> {
        self.filters.iter().map(|f| f.weights.len()).collect()
    }

    pub fn extract(&self, signal: &AudioSignal) -> Result<FeatureMatrix> {
        if signal.sample_rate() != SAMPLE_RATE {
            return Err(Error::Features(format!(
                "expected {SAMPLE_RATE} Hz input, got {} Hz (no resampling is done)",
                signal.sample_rate()
            )));
        }
        let samples = signal.samples();
        let t = num_frames(samples.len()).ok_or_else(|| {
            Error::Features(format!(
                "signal of {} samples is shorter than one {WINDOW_SAMPLES}-sample window",
                samples.len()
            ))
        })?;
        let mut values = vec![0.0; FEATURE_DIM * t];
        let mut buf = vec![Complex::new(0.0, 0.0); FFT_SIZE];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0; FFT_SIZE / 2 + 1];
        for frame in 0..t {
            let chunk = &samples[frame * HOP_SAMPLES..frame * HOP_SAMPLES + WINDOW_SAMPLES];
            for (b, (s, w)) in buf.iter_mut().zip(chunk.iter().zip(&self.window)) {
                *b = Complex::new(s * w, 0.0);
            }
            buf[WINDOW_SAMPLES..].fill(Complex::new(0.0, 0.0));
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for (bin, f) in self.filters.iter().enumerate() {
                let e: f64 = f
                    .weights
                    .iter()
                    .zip(&power[f.start..])
                    .map(|(w, p)| w * p)
                    .sum();
                values[bin * t + frame] = e.max(POWER_FLOOR).ln();
            }
        }
        Ok(FeatureMatrix::new(Tensor::new(&[FEATURE_DIM, t], values)?)?)
    }
}

/// [`FbankExtractor::extract`] with a freshly built extractor.
pub fn compute_fbank(signal: &AudioSignal) -> Result<FeatureMatrix> {
    FbankExtractor::new().extract(signal)
}
