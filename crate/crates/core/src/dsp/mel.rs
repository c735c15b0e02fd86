use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{DspError, Result};

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular mel filterbank (HTK scale, unit-peak triangles) mapping an
/// `fft_size/2+1` bin magnitude or power spectrum onto `n_mels` bands.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub sample_rate: u32,
    pub fft_size: usize,
    pub fmin: f64,
    pub fmax: f64,
    /// `n_mels × (fft_size/2 + 1)`
    pub weights: Array2<f64>,
}

impl MelFilterbank {
    pub fn new(n_mels: usize, sample_rate: u32, fft_size: usize, fmin: f64, fmax: f64) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if n_mels == 0 || !(0.0 <= fmin && fmin < fmax && fmax <= nyquist) {
            return Err(DspError::InvalidBand(format!(
                "n_mels={n_mels}, fmin={fmin}, fmax={fmax}, nyquist={nyquist}"
            )));
        }
        let bins = fft_size / 2 + 1;
        let mel_lo = hz_to_mel(fmin);
        let mel_hi = hz_to_mel(fmax);
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / fft_size as f64;
        let mut weights = Array2::zeros((n_mels, bins));
        for m in 0..n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..bins {
                let f = k as f64 * bin_hz;
                let w = if f > lo && f <= center {
                    (f - lo) / (center - lo)
                } else if f > center && f < hi {
                    (hi - f) / (hi - center)
                } else {
                    0.0
                };
                weights[[m, k]] = w;
            }
            if weights.row(m).sum() <= 0.0 {
                return Err(DspError::InvalidBand(format!(
                    "mel filter {m} ({lo:.1}-{hi:.1} Hz) covers no FFT bin at fft_size {fft_size}"
                )));
            }
        }
        Ok(Self {
            n_mels,
            sample_rate,
            fft_size,
            fmin,
            fmax,
            weights,
        })
    }

    /// Largest band count `≤ requested` whose filters all cover at least one
    /// bin.
    pub fn usable_mels(requested: usize, sample_rate: u32, fft_size: usize, fmin: f64, fmax: f64) -> usize {
        (1..=requested)
            .rev()
            .find(|&m| Self::new(m, sample_rate, fft_size, fmin, fmax).is_ok())
            .unwrap_or(0)
    }

    pub fn n_bins(&self) -> usize {
        self.weights.ncols()
    }

    pub fn apply(&self, spectrum: ArrayView1<f64>) -> Array1<f64> {
        self.weights.dot(&spectrum)
    }

    /// Projects every row of a `frames × bins` spectrogram.
    pub fn apply_frames(&self, spec: ArrayView2<f64>) -> Array2<f64> {
        spec.dot(&self.weights.t())
    }
}

pub fn mel_filterbank(n_mels: usize, sample_rate: u32, fft_size: usize, fmin: f64, fmax: f64) -> Result<MelFilterbank> {
    MelFilterbank::new(n_mels, sample_rate, fft_size, fmin, fmax)
}
