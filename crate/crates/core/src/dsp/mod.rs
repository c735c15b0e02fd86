//! Numerical substrate: STFT/ISTFT, windows, mel filterbanks, FIR design
//! and fast convolution. All accumulation is done in `f64`.

mod conv;
mod fir;
mod mel;
mod stft;
pub mod window;

use thiserror::Error;

pub use conv::{convolve, convolve_samples, ConvMode};
pub use fir::{fir_lowpass, frequency_response, taps_for_transition, LOWPASS_KAISER_BETA};
pub use mel::{hz_to_mel, mel_filterbank, mel_to_hz, MelFilterbank};
pub(crate) use stft::reflect_index;
pub use stft::{istft, stft, ComplexSpectrogram, StftConfig, StftPlan, WindowKind};

pub type Result<T> = std::result::Result<T, DspError>;

#[derive(Error, Debug)]
pub enum DspError {
    #[error("invalid STFT configuration: {0}")]
    InvalidConfig(String),
    #[error("empty input signal")]
    EmptyInput,
    #[error("squared-window envelope vanishes at output sample {index}")]
    DegenerateOverlap { index: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid mel band: {0}")]
    InvalidBand(String),
    #[error("cutoff {cutoff} Hz outside (0, {sample_rate}/2)")]
    InvalidCutoff { cutoff: f64, sample_rate: f64 },
    #[error(transparent)]
    Audio(#[from] crate::audio::AudioError),
}
