//! Mono waveform container, RIFF/WAVE I/O and sample-rate conversion.
//!
//! Every downstream module consumes [`Waveform`]: a mono buffer of finite
//! `f32` samples plus a positive sample rate. Multichannel files are
//! downmixed by arithmetic mean on read.

mod resample;

use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use resample::{resample, Resampler};

pub type Result<T> = std::result::Result<T, AudioError>;

#[derive(Error, Debug)]
pub enum AudioError {
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("malformed RIFF/WAVE container {path}: {reason}")]
    MalformedContainer { path: PathBuf, reason: String },
    #[error("unsupported encoding in {path}: {format:?} {bits} bit")]
    UnsupportedEncoding {
        path: PathBuf,
        format: SampleFormat,
        bits: u16,
    },
    #[error("file {0} contains no samples")]
    EmptyPayload(PathBuf),
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Mono sample buffer with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(AudioError::InvalidSampleRate);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Builds a waveform from double-precision samples, rounding to `f32`.
    /// Non-finite values are an error.
    pub fn from_f64(samples: &[f64], sample_rate: u32) -> Result<Self> {
        Self::new(samples.iter().map(|&s| s as f32).collect(), sample_rate)
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64).collect()
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Same rate, new samples. Internal processing never produces NaN/Inf,
    /// so this only checks in debug builds.
    pub(crate) fn with_samples(&self, samples: Vec<f32>) -> Waveform {
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Waveform {
            samples,
            sample_rate: self.sample_rate,
        }
    }

    pub(crate) fn with_f64(&self, samples: &[f64]) -> Waveform {
        self.with_samples(samples.iter().map(|&s| s as f32).collect())
    }

    /// Sample-wise scaling by a constant gain.
    pub fn scaled(&self, gain: f64) -> Waveform {
        self.with_samples(
            self.samples
                .iter()
                .map(|&s| (s as f64 * gain) as f32)
                .collect(),
        )
    }

    /// Truncates or zero-pads to exactly `len` samples.
    pub fn fit_to_len(&self, len: usize) -> Waveform {
        let mut s = self.samples.clone();
        s.resize(len, 0.0);
        self.with_samples(s)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum()
    }

    pub fn peak(&self) -> f64 {
        self.samples
            .iter()
            .fold(0.0f64, |m, &s| m.max((s as f64).abs()))
    }
}

/// On-disk sample encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    Pcm16,
    Pcm24,
    Float32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AudioFileMeta {
    pub path: PathBuf,
    pub channels: u16,
    pub sample_rate: u32,
    pub encoding: Encoding,
    pub duration_samples: u64,
}

const PCM16_SCALE: f64 = 32768.0;
const PCM24_SCALE: f64 = 8_388_608.0;

fn malformed(path: &Path, err: hound::Error) -> AudioError {
    match err {
        hound::Error::IoError(source) => AudioError::IoFailure {
            path: path.to_path_buf(),
            source,
        },
        other => AudioError::MalformedContainer {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}

fn encoding_of(path: &Path, spec: &WavSpec) -> Result<Encoding> {
    match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => Ok(Encoding::Pcm16),
        (SampleFormat::Int, 24) => Ok(Encoding::Pcm24),
        (SampleFormat::Float, 32) => Ok(Encoding::Float32),
        (format, bits) => Err(AudioError::UnsupportedEncoding {
            path: path.to_path_buf(),
            format,
            bits,
        }),
    }
}

/// Reads the header of a WAV file without decoding the payload.
pub fn probe_wav(path: impl AsRef<Path>) -> Result<AudioFileMeta> {
    let path = path.as_ref();
    let reader = WavReader::open(path).map_err(|e| malformed(path, e))?;
    let spec = reader.spec();
    let encoding = encoding_of(path, &spec)?;
    Ok(AudioFileMeta {
        path: path.to_path_buf(),
        channels: spec.channels,
        sample_rate: spec.sample_rate,
        encoding,
        duration_samples: reader.duration() as u64,
    })
}

/// Reads a WAV file as a mono waveform. Channels are averaged; integer PCM
/// is divided by its full-scale value (32768 for pcm16).
pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(|e| malformed(path, e))?;
    let spec = reader.spec();
    let encoding = encoding_of(path, &spec)?;
    let channels = spec.channels.max(1) as usize;

    let interleaved: Vec<f64> = match encoding {
        Encoding::Pcm16 => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
            .collect::<std::result::Result<_, _>>(),
        Encoding::Pcm24 => reader
            .samples::<i32>()
            .map(|s| s.map(|v| v as f64 / PCM24_SCALE))
            .collect::<std::result::Result<_, _>>(),
        Encoding::Float32 => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>(),
    }
    .map_err(|e| malformed(path, e))?;

    if interleaved.is_empty() {
        return Err(AudioError::EmptyPayload(path.to_path_buf()));
    }
    if interleaved.len() % channels != 0 {
        return Err(AudioError::MalformedContainer {
            path: path.to_path_buf(),
            reason: format!(
                "{} samples is not a multiple of {channels} channels",
                interleaved.len()
            ),
        });
    }

    let samples: Vec<f32> = if channels == 1 {
        interleaved.iter().map(|&s| s as f32).collect()
    } else {
        interleaved
            .chunks_exact(channels)
            .map(|frame| (frame.iter().sum::<f64>() / channels as f64) as f32)
            .collect()
    };
    Waveform::new(samples, spec.sample_rate).map_err(|e| AudioError::MalformedContainer {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn quantize(sample: f32, scale: f64) -> i32 {
    // clamp to [-1, 1) then round to nearest
    let max = (scale - 1.0) / scale;
    let clamped = (sample as f64).clamp(-1.0, max);
    (clamped * scale).round() as i32
}

/// Writes a mono WAV file. Integer encodings clamp to `[-1, 1)` and round to
/// the nearest code.
pub fn write_wav(w: &Waveform, path: impl AsRef<Path>, encoding: Encoding) -> Result<()> {
    let path = path.as_ref();
    let (bits, format) = match encoding {
        Encoding::Pcm16 => (16, SampleFormat::Int),
        Encoding::Pcm24 => (24, SampleFormat::Int),
        Encoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate,
        bits_per_sample: bits,
        sample_format: format,
    };
    let io_err = |e: hound::Error| match e {
        hound::Error::IoError(source) => AudioError::IoFailure {
            path: path.to_path_buf(),
            source,
        },
        other => AudioError::IoFailure {
            path: path.to_path_buf(),
            source: std::io::Error::other(other.to_string()),
        },
    };
    let mut writer = WavWriter::create(path, spec).map_err(io_err)?;
    match encoding {
        Encoding::Pcm16 => {
            for &s in &w.samples {
                writer
                    .write_sample(quantize(s, PCM16_SCALE) as i16)
                    .map_err(io_err)?;
            }
        }
        Encoding::Pcm24 => {
            for &s in &w.samples {
                writer
                    .write_sample(quantize(s, PCM24_SCALE))
                    .map_err(io_err)?;
            }
        }
        Encoding::Float32 => {
            for &s in &w.samples {
                writer.write_sample(s).map_err(io_err)?;
            }
        }
    }
    writer.finalize().map_err(io_err)
}
