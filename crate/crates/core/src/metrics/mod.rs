//! Training losses and intrusive evaluation metrics.
//!
//! Signal-ratio metrics ([`si_sdr`], [`sdr`]) are capped at
//! [`CAPPED_DB`] so perfect reconstructions stay finite in reports.
//! Spectral distances ([`multiscale_mel_distance`], [`log_spectral_distance`],
//! [`mel_cepstral_distortion`]) are symmetric and zero for identical inputs.

mod embedding;
mod loss;
mod ratio;
mod spectral;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::Waveform;

pub use embedding::{cosine_embedding_loss, feature_matching_loss};
pub use loss::{stage1_loss, Embedder, LayerFeatures, LossBreakdown, Stage3Loss};
pub use ratio::{sdr, sdr_samples, si_sdr, si_sdr_samples, CAPPED_DB, RATIO_EPS};
pub use spectral::{
    log_spectral_distance, mel_cepstral_distortion, multiscale_mel_distance, MelScale,
    MultiScaleMelConfig, LSD_EPS, MCD_COEFFS, MCD_EPS, MCD_MELS,
};

pub type Result<T> = std::result::Result<T, MetricError>;

#[derive(Error, Debug)]
pub enum MetricError {
    #[error("reference signal is all zeros")]
    ZeroReference,
    #[error("length mismatch: reference {reference} vs estimate {estimate}")]
    LengthMismatch { reference: usize, estimate: usize },
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("empty signal")]
    Empty,
    #[error("zero-norm embedding vector")]
    ZeroVector,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid metric configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

/// One evaluated metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub name: String,
    pub value: f64,
    pub direction: Direction,
    /// set when the value hit [`CAPPED_DB`] (perfect reconstruction)
    #[serde(default)]
    pub capped: bool,
}

/// Metrics the evaluator knows by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Sdr,
    SiSdr,
    Lsd,
    Mcd,
    MelDistance,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::Sdr,
        MetricKind::SiSdr,
        MetricKind::Lsd,
        MetricKind::Mcd,
        MetricKind::MelDistance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Sdr => "sdr",
            MetricKind::SiSdr => "si_sdr",
            MetricKind::Lsd => "lsd",
            MetricKind::Mcd => "mcd",
            MetricKind::MelDistance => "mel_distance",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn direction(self) -> Direction {
        match self {
            MetricKind::Sdr | MetricKind::SiSdr => Direction::HigherBetter,
            _ => Direction::LowerBetter,
        }
    }

    pub fn evaluate(self, reference: &Waveform, estimate: &Waveform) -> Result<MetricValue> {
        let value = match self {
            MetricKind::Sdr => sdr(reference, estimate)?,
            MetricKind::SiSdr => si_sdr(reference, estimate)?,
            MetricKind::Lsd => log_spectral_distance(reference, estimate)?,
            MetricKind::Mcd => mel_cepstral_distortion(reference, estimate)?,
            MetricKind::MelDistance => {
                multiscale_mel_distance(reference, estimate, &MultiScaleMelConfig::default())?
            }
        };
        let capped = matches!(self, MetricKind::Sdr | MetricKind::SiSdr) && value >= CAPPED_DB;
        Ok(MetricValue {
            name: self.name().to_string(),
            value,
            direction: self.direction(),
            capped,
        })
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub(crate) fn check_pair(reference: &Waveform, estimate: &Waveform) -> Result<()> {
    if reference.sample_rate() != estimate.sample_rate() {
        return Err(MetricError::RateMismatch(
            reference.sample_rate(),
            estimate.sample_rate(),
        ));
    }
    if reference.len() != estimate.len() {
        return Err(MetricError::LengthMismatch {
            reference: reference.len(),
            estimate: estimate.len(),
        });
    }
    if reference.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}
