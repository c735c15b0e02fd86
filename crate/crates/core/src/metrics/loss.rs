//! Composite training objectives built from the individual metrics.
//!
//! The speaker and phoneme terms are generic: any [`Embedder`] or
//! [`LayerFeatures`] implementation (or closure) can stand in for a
//! pretrained encoder. Each term carries a weight, 1.0 by default.

use ndarray::ArrayD;
use serde::Serialize;

use super::{
    cosine_embedding_loss, feature_matching_loss, multiscale_mel_distance, si_sdr, MultiScaleMelConfig,
    Result,
};
use crate::audio::Waveform;

/// Maps a waveform to a fixed-size embedding (speaker encoder role).
pub trait Embedder: Send + Sync {
    fn embed(&self, w: &Waveform) -> Vec<f64>;
}

impl<F> Embedder for F
where
    F: Fn(&Waveform) -> Vec<f64> + Send + Sync,
{
    fn embed(&self, w: &Waveform) -> Vec<f64> {
        self(w)
    }
}

/// Maps a waveform to a stack of intermediate feature tensors
/// (phoneme recognizer role).
pub trait LayerFeatures: Send + Sync {
    fn features(&self, w: &Waveform) -> Vec<ArrayD<f64>>;
}

impl<F> LayerFeatures for F
where
    F: Fn(&Waveform) -> Vec<ArrayD<f64>> + Send + Sync,
{
    fn features(&self, w: &Waveform) -> Vec<ArrayD<f64>> {
        self(w)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub mel: f64,
    /// negated SI-SDR
    pub si_sdr: f64,
    pub speaker: Option<f64>,
    pub phoneme: Option<f64>,
    pub total: f64,
}

/// Stage-1 objective: multi-scale mel distance plus negated SI-SDR.
pub fn stage1_loss(clean: &Waveform, estimate: &Waveform, mel_cfg: &MultiScaleMelConfig) -> Result<LossBreakdown> {
    let mel = multiscale_mel_distance(clean, estimate, mel_cfg)?;
    let neg = -si_sdr(clean, estimate)?;
    Ok(LossBreakdown {
        mel,
        si_sdr: neg,
        speaker: None,
        phoneme: None,
        total: mel + neg,
    })
}

/// Fusion-stage objective: the stage-1 terms plus optional speaker-embedding
/// cosine loss and feature-matching loss.
pub struct Stage3Loss {
    pub mel_cfg: MultiScaleMelConfig,
    pub speaker: Option<Box<dyn Embedder>>,
    pub phoneme: Option<Box<dyn LayerFeatures>>,
    pub weight_mel: f64,
    pub weight_si_sdr: f64,
    pub weight_speaker: f64,
    pub weight_phoneme: f64,
}

impl Default for Stage3Loss {
    fn default() -> Self {
        Self {
            mel_cfg: MultiScaleMelConfig::default(),
            speaker: None,
            phoneme: None,
            weight_mel: 1.0,
            weight_si_sdr: 1.0,
            weight_speaker: 1.0,
            weight_phoneme: 1.0,
        }
    }
}

impl Stage3Loss {
    pub fn evaluate(&self, clean: &Waveform, estimate: &Waveform) -> Result<LossBreakdown> {
        let base = stage1_loss(clean, estimate, &self.mel_cfg)?;
        let speaker = self
            .speaker
            .as_ref()
            .map(|e| cosine_embedding_loss(&e.embed(clean), &e.embed(estimate)))
            .transpose()?;
        let phoneme = self
            .phoneme
            .as_ref()
            .map(|f| feature_matching_loss(&f.features(clean), &f.features(estimate)))
            .transpose()?;
        let total = self.weight_mel * base.mel
            + self.weight_si_sdr * base.si_sdr
            + speaker.map_or(0.0, |v| self.weight_speaker * v)
            + phoneme.map_or(0.0, |v| self.weight_phoneme * v);
        Ok(LossBreakdown {
            speaker,
            phoneme,
            total,
            ..base
        })
    }
}
