//! Reference DSP enhancers that fill the stage slots without trained
//! weights. Both run on the 4096/1024 Hann STFT grid.

use ndarray::Array2;
use num_complex::Complex64;

use super::stage::{ReceptiveContext, Stage, StageInput};
use super::{PipelineError, Result};
use crate::audio::Waveform;
use crate::dsp::{StftConfig, StftPlan};

/// Decision-directed smoothing constant for the a-priori SNR.
pub const DECISION_DIRECTED_ALPHA: f64 = 0.98;

/// Where an enhancer gets its noise statistics.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseEstimate {
    /// The first `ms` milliseconds of the input are assumed noise-only.
    LeadingMs(f64),
    /// A separate noise recording (e.g. the oracle noise of a simulation).
    External(Waveform),
}

/// Per-bin mean magnitude and mean power of the noise.
struct NoiseProfile {
    magnitude: Vec<f64>,
    power: Vec<f64>,
}

fn profile(frames: &Array2<Complex64>) -> NoiseProfile {
    let n = frames.nrows().max(1) as f64;
    let bins = frames.ncols();
    let mut magnitude = vec![0.0; bins];
    let mut power = vec![0.0; bins];
    for row in frames.rows() {
        for (k, c) in row.iter().enumerate() {
            magnitude[k] += c.norm();
            power[k] += c.norm_sqr();
        }
    }
    magnitude.iter_mut().for_each(|v| *v /= n);
    power.iter_mut().for_each(|v| *v /= n);
    NoiseProfile { magnitude, power }
}

fn estimate_noise(estimate: &NoiseEstimate, x: &Waveform, spec: &Array2<Complex64>, plan: &StftPlan) -> Result<NoiseProfile> {
    match estimate {
        NoiseEstimate::LeadingMs(ms) => {
            let lead = (ms / 1000.0 * x.sample_rate() as f64).round() as usize;
            if !(*ms > 0.0) || lead > x.len() {
                return Err(PipelineError::InvalidNoiseWindow(format!(
                    "leading {ms} ms ({lead} samples) for a {} sample input",
                    x.len()
                )));
            }
            // frame t is centered on sample t·hop
            let count = lead.div_ceil(plan.config().hop).clamp(1, spec.nrows());
            Ok(profile(&spec.slice(ndarray::s![..count, ..]).to_owned()))
        }
        NoiseEstimate::External(n) => {
            if n.sample_rate() != x.sample_rate() {
                return Err(PipelineError::RateMismatch(x.sample_rate(), n.sample_rate()));
            }
            if n.is_empty() {
                return Err(PipelineError::InvalidNoiseWindow("external noise estimate is empty".into()));
            }
            Ok(profile(&plan.forward(&n.to_f64())))
        }
    }
}

/// Magnitude spectral subtraction:
/// `|Ŝ| = max(|X| − β·|N̂|, floor·|X|)` with the noisy phase.
#[derive(Debug, Clone)]
pub struct SpectralSubtraction {
    noise: NoiseEstimate,
    oversubtraction: f64,
    floor: f64,
    plan: StftPlan,
}

impl SpectralSubtraction {
    pub fn new(noise: NoiseEstimate, oversubtraction: f64, floor: f64) -> Result<Self> {
        if !(oversubtraction >= 1.0) {
            return Err(PipelineError::InvalidConfig(format!("oversubtraction {oversubtraction} < 1")));
        }
        if !(0.0..1.0).contains(&floor) {
            return Err(PipelineError::InvalidConfig(format!("spectral floor {floor} outside [0, 1)")));
        }
        Ok(Self {
            noise,
            oversubtraction,
            floor,
            plan: StftPlan::new(StftConfig::default())?,
        })
    }

    pub fn process(&self, x: &Waveform) -> Result<Waveform> {
        if x.is_empty() {
            return Ok(x.clone());
        }
        let mut spec = self.plan.forward(&x.to_f64());
        let noise = estimate_noise(&self.noise, x, &spec, &self.plan)?;
        for mut row in spec.rows_mut() {
            for (c, &n) in row.iter_mut().zip(&noise.magnitude) {
                let mag = c.norm();
                if mag == 0.0 {
                    continue;
                }
                let target = (mag - self.oversubtraction * n).max(self.floor * mag);
                *c *= target / mag;
            }
        }
        Ok(x.with_f64(&self.plan.inverse(&spec, x.len())?))
    }
}

impl Stage for SpectralSubtraction {
    fn name(&self) -> &str {
        "spectral_subtraction"
    }
    fn context(&self) -> ReceptiveContext {
        ReceptiveContext::FullSignal
    }
    fn enhance(&self, input: &StageInput) -> Result<Waveform> {
        self.process(input.signals.primary())
    }
}

/// Wiener filter with a decision-directed a-priori SNR:
/// `ξ(t) = α·|Ŝ(t−1)|²/λ + (1−α)·max(γ(t) − 1, 0)`, `G = max(ξ/(1+ξ), min_gain)`.
#[derive(Debug, Clone)]
pub struct WienerFilter {
    noise: NoiseEstimate,
    min_gain: f64,
    plan: StftPlan,
}

impl WienerFilter {
    pub fn new(noise: NoiseEstimate, min_gain: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&min_gain) {
            return Err(PipelineError::InvalidConfig(format!("min gain {min_gain} outside [0, 1)")));
        }
        Ok(Self {
            noise,
            min_gain,
            plan: StftPlan::new(StftConfig::default())?,
        })
    }

    pub fn process(&self, x: &Waveform) -> Result<Waveform> {
        if x.is_empty() {
            return Ok(x.clone());
        }
        let mut spec = self.plan.forward(&x.to_f64());
        let noise = estimate_noise(&self.noise, x, &spec, &self.plan)?;
        let bins = spec.ncols();
        let mut prev_clean = vec![0.0f64; bins];
        for (t, mut row) in spec.rows_mut().into_iter().enumerate() {
            for (k, c) in row.iter_mut().enumerate() {
                let lambda = noise.power[k];
                if lambda <= 0.0 {
                    prev_clean[k] = c.norm_sqr();
                    continue;
                }
                let gamma = c.norm_sqr() / lambda;
                let ml = (gamma - 1.0).max(0.0);
                let xi = if t == 0 {
                    ml
                } else {
                    DECISION_DIRECTED_ALPHA * prev_clean[k] / lambda + (1.0 - DECISION_DIRECTED_ALPHA) * ml
                };
                let g = (xi / (1.0 + xi)).max(self.min_gain);
                *c *= g;
                prev_clean[k] = c.norm_sqr();
            }
        }
        Ok(x.with_f64(&self.plan.inverse(&spec, x.len())?))
    }
}

impl Stage for WienerFilter {
    fn name(&self) -> &str {
        "wiener"
    }
    fn enhance(&self, input: &StageInput) -> Result<Waveform> {
        self.process(input.signals.primary())
    }
}
