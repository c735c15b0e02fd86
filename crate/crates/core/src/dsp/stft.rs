use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::window::hann_periodic;
use super::{DspError, Result};
use crate::audio::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    #[default]
    Hann,
}

/// STFT analysis configuration. The default is a 4096-point periodic Hann
/// window at hop 1024 (75% overlap) with centered frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop: usize,
    #[serde(default)]
    pub window: WindowKind,
    #[serde(default = "default_center")]
    pub center: bool,
}

fn default_center() -> bool {
    true
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            fft_size: 4096,
            hop: 1024,
            window: WindowKind::Hann,
            center: true,
        }
    }
}

impl StftConfig {
    pub fn new(fft_size: usize, hop: usize) -> Result<Self> {
        let cfg = Self {
            fft_size,
            hop,
            window: WindowKind::Hann,
            center: true,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size < 2 || !self.fft_size.is_power_of_two() {
            return Err(DspError::InvalidConfig(format!(
                "fft_size {} must be a power of two ≥ 2",
                self.fft_size
            )));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(DspError::InvalidConfig(format!(
                "hop {} must be in 1..={}",
                self.hop, self.fft_size
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frame count for a signal of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        let padded = if self.center {
            len + self.fft_size
        } else {
            len.max(self.fft_size)
        };
        1 + (padded - self.fft_size) / self.hop
    }

    pub fn window(&self) -> Vec<f64> {
        match self.window {
            WindowKind::Hann => hann_periodic(self.fft_size),
        }
    }
}

/// Complex STFT frames (`frames × bins`) with the configuration and source
/// length needed for exact-length inversion.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub frames: Array2<Complex64>,
    pub config: StftConfig,
    pub source_len: usize,
    pub sample_rate: u32,
}

impl ComplexSpectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.frames.ncols()
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.frames.mapv(|c| c.norm())
    }

    pub fn power(&self) -> Array2<f64> {
        self.frames.mapv(|c| c.norm_sqr())
    }
}

/// Reflect index into `0..len` with repeated bouncing (numpy "reflect",
/// edge sample not repeated).
pub(crate) fn reflect_index(i: i64, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as i64 - 1);
    let m = i.rem_euclid(period);
    if m < len as i64 {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Reusable forward/inverse transform for one configuration. Plans and the
/// window are built once and the value can be shared across threads.
#[derive(Clone)]
pub struct StftPlan {
    config: StftConfig,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for StftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftPlan").field("config", &self.config).finish()
    }
}

impl StftPlan {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            window: config.window(),
            forward: planner.plan_fft_forward(config.fft_size),
            inverse: planner.plan_fft_inverse(config.fft_size),
            config,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    fn padded(&self, x: &[f64]) -> Vec<f64> {
        let n = self.config.fft_size;
        if self.config.center {
            let pad = (n / 2) as i64;
            (0..x.len() as i64 + 2 * pad)
                .map(|i| x[reflect_index(i - pad, x.len())])
                .collect()
        } else {
            let mut v = x.to_vec();
            if v.len() < n {
                v.resize(n, 0.0);
            }
            v
        }
    }

    /// Forward transform of raw samples. `x` must be nonempty.
    pub fn forward(&self, x: &[f64]) -> Array2<Complex64> {
        assert!(!x.is_empty(), "stft of empty signal");
        let n = self.config.fft_size;
        let hop = self.config.hop;
        let bins = self.config.n_bins();
        let padded = self.padded(x);
        let n_frames = self.config.n_frames(x.len());
        let mut out = Array2::zeros((n_frames, bins));
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for (t, mut row) in out.rows_mut().into_iter().enumerate() {
            let start = t * hop;
            for (k, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(padded[start + k] * self.window[k], 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            row.iter_mut().zip(&buf[..bins]).for_each(|(o, v)| *o = *v);
        }
        out
    }

    /// Weighted overlap-add inverse normalized by the squared-window
    /// envelope, trimmed to `source_len`.
    pub fn inverse(&self, frames: &Array2<Complex64>, source_len: usize) -> Result<Vec<f64>> {
        let n = self.config.fft_size;
        let hop = self.config.hop;
        let bins = self.config.n_bins();
        if frames.ncols() != bins {
            return Err(DspError::ShapeMismatch(format!(
                "spectrogram has {} bins, config expects {bins}",
                frames.ncols()
            )));
        }
        let n_frames = frames.nrows();
        let total = (n_frames.saturating_sub(1)) * hop + n;
        let mut acc = vec![0.0f64; total];
        let mut env = vec![0.0f64; total];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let scale = 1.0 / n as f64;
        for (t, row) in frames.rows().into_iter().enumerate() {
            // Hermitian completion; imaginary parts of DC/Nyquist are dropped
            for k in 0..bins {
                buf[k] = row[k];
            }
            buf[0].im = 0.0;
            if n % 2 == 0 {
                buf[n / 2].im = 0.0;
            }
            for k in bins..n {
                buf[k] = buf[n - k].conj();
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = t * hop;
            for k in 0..n {
                let w = self.window[k];
                acc[start + k] += buf[k].re * scale * w;
                env[start + k] += w * w;
            }
        }
        let offset = if self.config.center { n / 2 } else { 0 };
        let mut out = Vec::with_capacity(source_len);
        for i in 0..source_len {
            let j = i + offset;
            let e = env.get(j).copied().unwrap_or(0.0);
            if e < 1e-8 {
                return Err(DspError::DegenerateOverlap { index: i });
            }
            out.push(acc[j] / e);
        }
        Ok(out)
    }
}

pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    if w.is_empty() {
        return Err(DspError::EmptyInput);
    }
    let plan = StftPlan::new(*cfg)?;
    Ok(ComplexSpectrogram {
        frames: plan.forward(&w.to_f64()),
        config: *cfg,
        source_len: w.len(),
        sample_rate: w.sample_rate(),
    })
}

pub fn istft(s: &ComplexSpectrogram) -> Result<Waveform> {
    let plan = StftPlan::new(s.config)?;
    let out = plan.inverse(&s.frames, s.source_len)?;
    Ok(Waveform::from_f64(&out, s.sample_rate)?)
}
