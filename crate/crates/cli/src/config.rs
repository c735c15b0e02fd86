//! The run configuration document (a single JSON object).
//!
//! ```json
//! {
//!   "sample_rate": 16000,
//!   "stages": {
//!     "s1": {"kind": "wiener", "noise_ms": 250, "min_gain": 0.1},
//!     "s2": {"kind": "token", "codebook": "codebook.rvq", "predictor": "copy"},
//!     "s3": {"kind": "fusion", "weights": [0.2, 0.4, 0.4],
//!            "inner": {"kind": "spectral_subtraction"}}
//!   },
//!   "shifts": {"s1": {"count": 10}, "s2": {"offsets": [0]}, "s3": {"count": 4, "span_s": 0.1}},
//!   "blend": ["s2", "s3"]
//! }
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use urgentkit_core::codec::{self, Codec, CopyPredictor, Predictor, TokenStage, UniformPredictor};
use urgentkit_core::distortion::RecipeSampler;
use urgentkit_core::pipeline::{
    BlendSet, FusionStage, GainStage, IdentityStage, NoiseEstimate, PipelineConfig, PipelineStages, ShiftConfig,
    SlidingWindowConfig, SpectralSubtraction, Stage, WienerFilter, DEFAULT_SHIFT_COUNT, DEFAULT_SHIFT_SPAN_S,
};

use crate::error::{io_err, CliError, Result};
use crate::hex_digest;

pub const DEFAULT_PIPELINE_RATE: u32 = 16000;

fn default_rate() -> u32 {
    DEFAULT_PIPELINE_RATE
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Rate the pipeline runs at; enhanced files are written at this rate.
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<StageSpecs>,
    #[serde(default)]
    pub shifts: ShiftSpecs,
    #[serde(default)]
    pub window: SlidingWindowConfig,
    #[serde(default)]
    pub blend: BlendSet,
    #[serde(default = "yes")]
    pub blend_aggregated: bool,
    /// Recipe sampler for manifest entries without a recipe.
    #[serde(default)]
    pub simulate: RecipeSampler,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("every field has a default")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpecs {
    pub s1: StageSpec,
    pub s2: StageSpec,
    pub s3: StageSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Copy,
    Uniform,
}

fn default_noise_ms() -> f64 {
    250.0
}
fn default_oversub() -> f64 {
    2.0
}
fn default_floor() -> f64 {
    0.02
}
fn default_min_gain() -> f64 {
    0.1
}
fn default_predictor() -> PredictorKind {
    PredictorKind::Copy
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StageSpec {
    Identity,
    Gain {
        gain: f64,
    },
    SpectralSubtraction {
        #[serde(default = "default_noise_ms")]
        noise_ms: f64,
        #[serde(default = "default_oversub")]
        oversubtraction: f64,
        #[serde(default = "default_floor")]
        floor: f64,
    },
    Wiener {
        #[serde(default = "default_noise_ms")]
        noise_ms: f64,
        #[serde(default = "default_min_gain")]
        min_gain: f64,
    },
    Token {
        codebook: PathBuf,
        #[serde(default = "default_predictor")]
        predictor: PredictorKind,
    },
    Fusion {
        weights: [f64; 3],
        inner: Box<StageSpec>,
    },
}

impl StageSpec {
    pub fn build(&self) -> Result<Box<dyn Stage>> {
        Ok(match self {
            StageSpec::Identity => Box::new(IdentityStage),
            StageSpec::Gain { gain } => Box::new(GainStage(*gain)),
            StageSpec::SpectralSubtraction {
                noise_ms,
                oversubtraction,
                floor,
            } => Box::new(SpectralSubtraction::new(
                NoiseEstimate::LeadingMs(*noise_ms),
                *oversubtraction,
                *floor,
            )?),
            StageSpec::Wiener { noise_ms, min_gain } => {
                Box::new(WienerFilter::new(NoiseEstimate::LeadingMs(*noise_ms), *min_gain)?)
            }
            StageSpec::Token { codebook, predictor } => {
                let codec = Codec::new(codec::file::load(codebook)?)?;
                let p: Box<dyn Predictor> = match predictor {
                    PredictorKind::Copy => Box::new(CopyPredictor {
                        codebooks: codec.codebooks().clone(),
                    }),
                    PredictorKind::Uniform => Box::new(UniformPredictor {
                        size: codec.codebooks().size(),
                    }),
                };
                Box::new(TokenStage::new(codec, p))
            }
            StageSpec::Fusion { weights, inner } => Box::new(FusionStage::new(*weights, inner.build()?)),
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        match self {
            StageSpec::Token { codebook, .. } if codebook.is_relative() => *codebook = base.join(&*codebook),
            StageSpec::Fusion { inner, .. } => inner.resolve_paths(base),
            _ => {}
        }
    }

    /// Content hashes of any codebooks this stage loads.
    fn codebook_hashes(&self, out: &mut Vec<String>) -> Result<()> {
        match self {
            StageSpec::Token { codebook, .. } => out.push(codec::file::content_hash(&codec::file::load(codebook)?)),
            StageSpec::Fusion { inner, .. } => inner.codebook_hashes(out)?,
            _ => {}
        }
        Ok(())
    }
}

fn default_span() -> f64 {
    DEFAULT_SHIFT_SPAN_S
}

/// Either explicit sample offsets or a stratified draw over the first
/// `span_s` seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ShiftSpec {
    Offsets {
        offsets: Vec<usize>,
    },
    Stratified {
        count: usize,
        #[serde(default = "default_span")]
        span_s: f64,
    },
}

impl Default for ShiftSpec {
    fn default() -> Self {
        ShiftSpec::Stratified {
            count: DEFAULT_SHIFT_COUNT,
            span_s: DEFAULT_SHIFT_SPAN_S,
        }
    }
}

impl ShiftSpec {
    pub fn resolve(&self, sample_rate: u32) -> ShiftConfig {
        match self {
            ShiftSpec::Offsets { offsets } => ShiftConfig {
                offsets: offsets.clone(),
            },
            ShiftSpec::Stratified { count, span_s } => ShiftConfig::stratified_for_rate(*count, *span_s, sample_rate),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ShiftSpecs {
    #[serde(default)]
    pub s1: ShiftSpec,
    #[serde(default)]
    pub s2: ShiftSpec,
    #[serde(default)]
    pub s3: ShiftSpec,
}

impl RunConfig {
    /// Reads a config file; relative codebook paths resolve against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let Some(st) = cfg.stages.as_mut() {
            for s in [&mut st.s1, &mut st.s2, &mut st.s3] {
                s.resolve_paths(base);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(CliError::Config("sample_rate must be positive".into()));
        }
        self.window.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for s in self.shift_configs() {
            s.validate(self.sample_rate).map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }

    pub fn stages(&self) -> Result<&StageSpecs> {
        self.stages
            .as_ref()
            .ok_or_else(|| CliError::Config("missing key `stages`".into()))
    }

    pub fn shift_configs(&self) -> [ShiftConfig; 3] {
        let r = self.sample_rate;
        [self.shifts.s1.resolve(r), self.shifts.s2.resolve(r), self.shifts.s3.resolve(r)]
    }

    /// The same configuration with every shift set spelled out as offsets.
    pub fn effective(&self) -> Self {
        let [s1, s2, s3] = self.shift_configs().map(|s| ShiftSpec::Offsets { offsets: s.offsets });
        Self {
            shifts: ShiftSpecs { s1, s2, s3 },
            ..self.clone()
        }
    }

    /// SHA-256 of the effective configuration's JSON form.
    pub fn hash(&self) -> String {
        hex_digest(&serde_json::to_vec(&self.effective()).expect("config serializes"))
    }

    pub fn build_stages(&self) -> Result<PipelineStages> {
        let st = self.stages()?;
        Ok(PipelineStages {
            s1: st.s1.build()?,
            s2: st.s2.build()?,
            s3: st.s3.build()?,
        })
    }

    pub fn codebook_hashes(&self) -> Result<Vec<String>> {
        let mut out = Vec::new();
        if let Some(st) = &self.stages {
            for s in [&st.s1, &st.s2, &st.s3] {
                s.codebook_hashes(&mut out)?;
            }
        }
        Ok(out)
    }

    pub fn pipeline_config(&self, seed: u64) -> PipelineConfig {
        PipelineConfig {
            shifts: self.shift_configs(),
            window: self.window,
            blend: self.blend.clone(),
            blend_aggregated: self.blend_aggregated,
            seed,
        }
    }
}
