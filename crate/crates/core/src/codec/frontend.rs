use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{CodecError, Result};
use crate::audio::{resample, Waveform};
use crate::dsp::{MelFilterbank, StftConfig, StftPlan};

pub const NNLS_ITERS: usize = 20;
pub const GRIFFIN_LIM_ITERS: usize = 32;
/// Knee of the `ln(1 + mel/ε)` compression applied before quantization.
pub const COMPRESSION_KNEE: f64 = 1e-3;

/// Analysis front-end of the codec: mel magnitudes of a centered Hann STFT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub fft_size: usize,
    pub hop: usize,
    pub n_mels: usize,
    pub fmin_hz: u32,
    pub fmax_hz: u32,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: 44100,
            fft_size: 2048,
            hop: 512,
            n_mels: 80,
            fmin_hz: 0,
            fmax_hz: 22050,
        }
    }
}

impl FrontendConfig {
    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    pub fn stft(&self) -> StftConfig {
        StftConfig {
            fft_size: self.fft_size,
            hop: self.hop,
            ..StftConfig::default()
        }
    }
}

/// Ready-to-use front-end: STFT plan, filterbank and the constants the
/// inverse mapping needs.
#[derive(Debug, Clone)]
pub struct Frontend {
    config: FrontendConfig,
    plan: StftPlan,
    bank: MelFilterbank,
    /// Σ_k W[m,k] per band
    band_mass: Array1<f64>,
    /// Lipschitz constant of the NNLS gradient (largest eigenvalue of WᵀW)
    lipschitz: f64,
}

impl Frontend {
    pub fn new(config: FrontendConfig) -> Result<Self> {
        if config.sample_rate == 0 || config.hop == 0 || config.fft_size < 2 {
            return Err(CodecError::InvalidCodebook(format!("front-end {config:?}")));
        }
        let plan = StftPlan::new(config.stft())?;
        let bank = MelFilterbank::new(
            config.n_mels,
            config.sample_rate,
            config.fft_size,
            config.fmin_hz as f64,
            config.fmax_hz as f64,
        )?;
        let band_mass = bank.weights.sum_axis(ndarray::Axis(1));
        let lipschitz = largest_eigenvalue(&bank.weights.dot(&bank.weights.t()));
        Ok(Self {
            config,
            plan,
            bank,
            band_mass,
            lipschitz,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.config
    }

    /// Number of frames for a signal of `len` samples at the front-end rate.
    pub fn n_frames(&self, len: usize) -> usize {
        self.config.stft().n_frames(len)
    }

    /// `T × n_mels` compressed mel frames, the vectors the quantizer sees.
    /// Zero maps to zero.
    pub fn features(&self, w: &Waveform) -> Result<Array2<f64>> {
        Ok(self.mel(w)?.mapv(compress))
    }

    /// `T × n_mels` mel magnitudes of `w` (resampled to the front-end rate
    /// when needed).
    pub fn mel(&self, w: &Waveform) -> Result<Array2<f64>> {
        if w.is_empty() {
            return Err(CodecError::EmptyInput);
        }
        let w = if w.sample_rate() != self.config.sample_rate {
            resample(w, self.config.sample_rate)
        } else {
            w.clone()
        };
        let mag = self.plan.forward(&w.to_f64()).mapv(|c| c.norm());
        Ok(self.bank.apply_frames(mag.view()))
    }

    /// Non-negative magnitude spectra whose mel projection approximates
    /// `mel` (projected gradient, started from a band-mass-normalized
    /// back-projection).
    pub fn mel_to_magnitude(&self, mel: &Array2<f64>) -> Array2<f64> {
        let w = &self.bank.weights;
        let scaled = Array2::from_shape_fn(mel.dim(), |(t, m)| {
            if self.band_mass[m] > 0.0 {
                mel[[t, m]].max(0.0) / self.band_mass[m]
            } else {
                0.0
            }
        });
        let mut s = scaled.dot(w);
        if self.lipschitz <= 0.0 {
            return s;
        }
        let step = 1.0 / self.lipschitz;
        for _ in 0..NNLS_ITERS {
            let resid = s.dot(&w.t()) - mel;
            let grad = resid.dot(w);
            s.zip_mut_with(&grad, |v, g| *v = (*v - step * g).max(0.0));
        }
        s
    }

    /// Griffin-Lim reconstruction of `num_samples` samples from magnitude
    /// frames, starting from zero phase.
    pub fn magnitude_to_waveform(&self, mag: &Array2<f64>, num_samples: usize) -> Result<Waveform> {
        let rate = self.config.sample_rate;
        let t = mag.nrows();
        if t == 0 || num_samples == 0 {
            return Ok(Waveform::zeros(num_samples, rate)?);
        }
        // centered frames reach half a window past the last frame center
        let len = num_samples.min((t - 1) * self.config.hop + self.config.fft_size / 2).max(1);
        let mut spec = mag.mapv(|m| Complex64::new(m, 0.0));
        for _ in 0..GRIFFIN_LIM_ITERS {
            let y = self.plan.inverse(&spec, len)?;
            let re = self.plan.forward(&y);
            let rows = re.nrows().min(t);
            for i in 0..rows {
                for k in 0..mag.ncols() {
                    let c = re[[i, k]];
                    let n = c.norm();
                    spec[[i, k]] = if n > 0.0 {
                        c * (mag[[i, k]] / n)
                    } else {
                        Complex64::new(mag[[i, k]], 0.0)
                    };
                }
            }
        }
        let y = self.plan.inverse(&spec, len)?;
        Ok(Waveform::from_f64(&y, rate)?.fit_to_len(num_samples))
    }

    /// Compressed feature frames back to a waveform of `num_samples` samples.
    pub fn synthesize(&self, features: &Array2<f64>, num_samples: usize) -> Result<Waveform> {
        let mel = features.mapv(expand);
        self.magnitude_to_waveform(&self.mel_to_magnitude(&mel), num_samples)
    }
}

pub fn compress(mel: f64) -> f64 {
    (mel.max(0.0) / COMPRESSION_KNEE).ln_1p()
}

pub fn expand(feature: f64) -> f64 {
    COMPRESSION_KNEE * feature.max(0.0).exp_m1()
}

/// Power iteration on a symmetric PSD matrix from a fixed start vector.
fn largest_eigenvalue(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..200 {
        let w = a.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        lambda = v.dot(&w);
        v = w / norm;
    }
    // small safety margin keeps the projected-gradient step contractive
    lambda * 1.01
}
