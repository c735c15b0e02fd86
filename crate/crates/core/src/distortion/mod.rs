//! On-the-fly degradation of clean speech: SNR-controlled noise mixing,
//! room reverberation and the closed set of chain distortions.
//!
//! Everything here is a pure function of its inputs and seed.

mod mix;
mod steps;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mix::{
    active_snr_db, activity_mask, apply_rir, masked_power, mix_at_snr, Mixture, ACTIVITY_FRAME_MS,
    ACTIVITY_GATE_DBFS, PEAK_LIMIT,
};
pub use steps::{
    bandwidth_limit, clip, codec_surrogate, packet_loss, packet_loss_with_mask, wind_noise,
    wind_noise_surrogate, PacketLoss, MIN_LOWPASS_TAPS, MU_LAW, PACKET_FADE_MS, WIND_CUTOFF_HZ,
};

use crate::audio::{AudioError, Waveform};
use crate::seed::derive_seed;

pub type Result<T> = std::result::Result<T, DistortionError>;

#[derive(Error, Debug)]
pub enum DistortionError {
    #[error("noise signal is empty or all zero")]
    ZeroNoise,
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("cutoff {cutoff_hz} Hz outside (0, Nyquist) for {sample_rate} Hz audio")]
    InvalidCutoff { cutoff_hz: f64, sample_rate: u32 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("recipe needs a {0} signal but none was supplied")]
    MissingResource(&'static str),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
}

/// One element of a distortion chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistortionStep {
    BandwidthLimit { cutoff_hz: f64 },
    Clip { threshold_fraction: f64 },
    CodecSurrogate { bits: u32, cutoff_hz: f64 },
    PacketLoss { rate: f64, burst_ms: f64 },
    WindNoise { snr_db: f64, gust_rate_hz: f64 },
}

impl DistortionStep {
    pub fn label(&self) -> &'static str {
        match self {
            Self::BandwidthLimit { .. } => "bandwidth_limit",
            Self::Clip { .. } => "clip",
            Self::CodecSurrogate { .. } => "codec_surrogate",
            Self::PacketLoss { .. } => "packet_loss",
            Self::WindNoise { .. } => "wind_noise",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DistortionError::InvalidParameter(msg));
        match *self {
            Self::Clip { threshold_fraction: t } if !(t > 0.0 && t <= 1.0) => {
                bad(format!("clip threshold {t} outside (0, 1]"))
            }
            Self::CodecSurrogate { bits, .. } if !(4..=16).contains(&bits) => {
                bad(format!("codec bits {bits} outside [4, 16]"))
            }
            Self::PacketLoss { rate, burst_ms } if !(0.0..=1.0).contains(&rate) || !(burst_ms > 0.0) => {
                bad(format!("packet loss rate {rate} / burst {burst_ms} ms invalid"))
            }
            Self::WindNoise { gust_rate_hz, .. } if !(gust_rate_hz > 0.0) => {
                bad(format!("gust rate {gust_rate_hz} Hz must be positive"))
            }
            _ => Ok(()),
        }
    }

    /// Applies the step; `seed` feeds the stochastic steps.
    pub fn apply(&self, w: &Waveform, seed: u64) -> Result<Waveform> {
        match *self {
            Self::BandwidthLimit { cutoff_hz } => bandwidth_limit(w, cutoff_hz),
            Self::Clip { threshold_fraction } => clip(w, threshold_fraction),
            Self::CodecSurrogate { bits, cutoff_hz } => codec_surrogate(w, bits, cutoff_hz),
            Self::PacketLoss { rate, burst_ms } => packet_loss(w, rate, burst_ms, seed),
            Self::WindNoise { snr_db, gust_rate_hz } => wind_noise_surrogate(w, snr_db, gust_rate_hz, seed),
        }
    }
}

/// Complete description of how one clean utterance is degraded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionRecipe {
    pub seed: u64,
    /// Noise mixing SNR; `None` skips the noise stage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    /// Identifier of the room response to apply, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rir: Option<String>,
    #[serde(default)]
    pub chain: Vec<DistortionStep>,
}

impl DistortionRecipe {
    pub fn clean(seed: u64) -> Self {
        Self {
            seed,
            snr_db: None,
            rir: None,
            chain: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.chain.iter().try_for_each(DistortionStep::validate)
    }
}

/// Degraded signal and the clean target it should be compared against.
#[derive(Debug, Clone, PartialEq)]
pub struct Degraded {
    pub degraded: Waveform,
    pub target: Waveform,
}

/// Runs RIR, noise mix and chain steps in that order. The target is the
/// (RIR-aligned) speech times every normalization gain applied on the way,
/// so `degraded` and `target` stay on the same scale.
pub fn apply_recipe(
    speech: &Waveform,
    noise: Option<&Waveform>,
    rir: Option<&Waveform>,
    recipe: &DistortionRecipe,
) -> Result<Degraded> {
    recipe.validate()?;
    let sr = speech.sample_rate();
    for other in noise.iter().chain(rir.iter()) {
        if other.sample_rate() != sr {
            return Err(DistortionError::RateMismatch(sr, other.sample_rate()));
        }
    }
    let mut target = match (&recipe.rir, rir) {
        (Some(_), Some(h)) => apply_rir(speech, h)?,
        (Some(_), None) => return Err(DistortionError::MissingResource("room impulse response")),
        (None, _) => speech.clone(),
    };
    let mut degraded = target.clone();
    if let Some(snr) = recipe.snr_db {
        let noise = noise.ok_or(DistortionError::MissingResource("noise"))?;
        let m = mix_at_snr(&degraded, noise, snr, derive_seed(recipe.seed, b"noise"))?;
        degraded = m.mixture;
        if m.gain != 1.0 {
            target = target.scaled(m.gain);
        }
    }
    for (i, step) in recipe.chain.iter().enumerate() {
        let label = format!("{i}:{}", step.label());
        degraded = step.apply(&degraded, derive_seed(recipe.seed, label.as_bytes()))?;
    }
    let peak = degraded.peak();
    if peak > PEAK_LIMIT {
        let g = PEAK_LIMIT / peak;
        degraded = degraded.scaled(g);
        target = target.scaled(g);
    }
    Ok(Degraded { degraded, target })
}

/// Draws recipes for manifest entries that do not specify one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecipeSampler {
    pub snr_range_db: (f64, f64),
    /// Probability that each chain distortion is included.
    pub step_probability: f64,
}

impl Default for RecipeSampler {
    fn default() -> Self {
        Self {
            snr_range_db: (-5.0, 20.0),
            step_probability: 0.0,
        }
    }
}

impl RecipeSampler {
    pub fn sample(&self, seed: u64, sample_rate: u32, has_noise: bool, rir: Option<String>) -> DistortionRecipe {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, b"recipe"));
        let (lo, hi) = self.snr_range_db;
        let snr = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let nyq = sample_rate as f64 / 2.0;
        let mut chain = Vec::new();
        let mut maybe = |rng: &mut ChaCha8Rng, step: DistortionStep| {
            if rng.gen::<f64>() < self.step_probability {
                chain.push(step);
            }
        };
        let cutoff = rng.gen_range(0.25..0.9) * nyq;
        maybe(&mut rng, DistortionStep::BandwidthLimit { cutoff_hz: cutoff });
        let thr = rng.gen_range(0.1..0.9);
        maybe(&mut rng, DistortionStep::Clip { threshold_fraction: thr });
        let bits = rng.gen_range(6..=12);
        let codec_cut = rng.gen_range(0.4..0.9) * nyq;
        maybe(&mut rng, DistortionStep::CodecSurrogate { bits, cutoff_hz: codec_cut });
        let rate = rng.gen_range(0.02..0.2);
        maybe(&mut rng, DistortionStep::PacketLoss { rate, burst_ms: 20.0 });
        let wind_snr = rng.gen_range(0.0..20.0);
        if nyq > WIND_CUTOFF_HZ {
            maybe(&mut rng, DistortionStep::WindNoise { snr_db: wind_snr, gust_rate_hz: 1.0 });
        }
        DistortionRecipe {
            seed,
            snr_db: has_noise.then_some(snr),
            rir,
            chain,
        }
    }
}
