//! Three-stage enhancement: a first estimate, a refinement conditioned on
//! the noisy input and that estimate, and a fusion of all three signals.
//! Each stage output can be shift-aggregated, chunked stages run through a
//! sliding window, and any subset of outputs can be blended.

mod aggregate;
mod enhancers;
mod stage;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aggregate::{
    blend, run_windowed, shift_aggregate, single_input, ShiftConfig, SlidingWindowConfig, DEFAULT_SHIFT_COUNT,
    DEFAULT_SHIFT_SPAN_S,
};
pub use enhancers::{NoiseEstimate, SpectralSubtraction, WienerFilter, DECISION_DIRECTED_ALPHA};
pub use stage::{
    assemble_fusion_input, invoke, FusionInput, FusionStage, GainStage, IdentityStage, NoisyIdentityStage,
    ReceptiveContext, Stage, StageInput, StageSignals, FUSION_LENGTH_TOLERANCE,
};

use crate::audio::{AudioError, Waveform};
use crate::seed::derive_seed;

pub type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Error, Debug)]
pub enum PipelineError {
    #[error("length mismatch: expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("invalid pipeline configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid noise window: {0}")]
    InvalidNoiseWindow(String),
    #[error("stage {stage} broke its contract: {reason}")]
    StageContract { stage: String, reason: String },
    #[error("nothing to process")]
    Empty,
    #[error("stage failed: {0}")]
    Stage(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
}

/// Identifies one of the three stage outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StageId {
    #[serde(rename = "s1")]
    S1,
    #[serde(rename = "s2")]
    S2,
    #[serde(rename = "s3")]
    S3,
}

impl StageId {
    pub const ALL: [StageId; 3] = [StageId::S1, StageId::S2, StageId::S3];

    pub fn label(self) -> &'static str {
        match self {
            StageId::S1 => "s1",
            StageId::S2 => "s2",
            StageId::S3 => "s3",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Nonempty set of distinct stage outputs to average.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<StageId>", into = "Vec<StageId>")]
pub struct BlendSet(Vec<StageId>);

impl BlendSet {
    pub fn new(members: Vec<StageId>) -> Result<Self> {
        if members.is_empty() {
            return Err(PipelineError::InvalidConfig("blend set must be nonempty".into()));
        }
        let mut sorted = members.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != members.len() {
            return Err(PipelineError::InvalidConfig("blend set members must be distinct".into()));
        }
        Ok(Self(members))
    }

    pub fn members(&self) -> &[StageId] {
        &self.0
    }

    /// Label such as `s2+s3`.
    pub fn label(&self) -> String {
        self.0.iter().map(|s| s.label()).collect::<Vec<_>>().join("+")
    }
}

impl TryFrom<Vec<StageId>> for BlendSet {
    type Error = PipelineError;
    fn try_from(v: Vec<StageId>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<BlendSet> for Vec<StageId> {
    fn from(b: BlendSet) -> Self {
        b.0
    }
}

impl Default for BlendSet {
    fn default() -> Self {
        Self(vec![StageId::S2, StageId::S3])
    }
}

/// Run-time settings for [`run_pipeline`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Shift offsets for s1, s2, s3.
    pub shifts: [ShiftConfig; 3],
    pub window: SlidingWindowConfig,
    pub blend: BlendSet,
    /// Blend the shift-aggregated outputs (true) or single unshifted passes.
    pub blend_aggregated: bool,
    pub seed: u64,
}

impl PipelineConfig {
    /// Default offsets for every stage at `sample_rate`.
    pub fn for_rate(sample_rate: u32) -> Self {
        let s = ShiftConfig::default_for_rate(sample_rate);
        Self {
            shifts: [s.clone(), s.clone(), s],
            window: SlidingWindowConfig::default(),
            blend: BlendSet::default(),
            blend_aggregated: true,
            seed: 0,
        }
    }

    /// No shifts: every stage runs once.
    pub fn unshifted() -> Self {
        Self {
            shifts: [ShiftConfig::single(), ShiftConfig::single(), ShiftConfig::single()],
            window: SlidingWindowConfig::default(),
            blend: BlendSet::default(),
            blend_aggregated: true,
            seed: 0,
        }
    }
}

/// The three stage implementations.
pub struct PipelineStages {
    pub s1: Box<dyn Stage>,
    pub s2: Box<dyn Stage>,
    pub s3: Box<dyn Stage>,
}

impl PipelineStages {
    fn get(&self, id: StageId) -> &dyn Stage {
        match id {
            StageId::S1 => self.s1.as_ref(),
            StageId::S2 => self.s2.as_ref(),
            StageId::S3 => self.s3.as_ref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub s1: Waveform,
    pub s2: Waveform,
    pub s3: Waveform,
    pub blended: Waveform,
}

impl PipelineOutput {
    pub fn get(&self, id: StageId) -> &Waveform {
        match id {
            StageId::S1 => &self.s1,
            StageId::S2 => &self.s2,
            StageId::S3 => &self.s3,
        }
    }
}

/// One stage call: windowed if the stage is chunked, at the stage's rate.
fn single_pass(stage: &dyn Stage, input: &StageInput, window: &SlidingWindowConfig) -> Result<Waveform> {
    match stage.context() {
        ReceptiveContext::Chunked => run_windowed(|i| invoke(stage, i), input, window),
        ReceptiveContext::FullSignal => invoke(stage, input),
    }
}

/// Runs a stage with shift aggregation; returns (aggregated, raw) where raw
/// is only computed when it differs from the aggregate and is needed.
fn run_stage(
    stage: &dyn Stage,
    input: &StageInput,
    shifts: &ShiftConfig,
    cfg: &PipelineConfig,
    need_raw: bool,
) -> Result<(Waveform, Option<Waveform>)> {
    let agg = shift_aggregate(|i| single_pass(stage, i, &cfg.window), input, shifts)?;
    let raw = if need_raw && shifts.offsets != [0] {
        Some(single_pass(stage, input, &cfg.window)?)
    } else {
        None
    };
    Ok((agg, raw))
}

/// Runs s1 on `x`, s2 on `(x, s̄1)`, s3 on `(x, s̄1, s̄2)` where `s̄` are the
/// aggregated outputs, then blends the configured subset.
pub fn run_pipeline(x: &Waveform, stages: &PipelineStages, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    if x.is_empty() {
        return Err(PipelineError::Empty);
    }
    cfg.window.validate()?;
    for s in &cfg.shifts {
        s.validate(x.sample_rate())?;
    }
    let need_raw = |id: StageId| !cfg.blend_aggregated && cfg.blend.members().contains(&id);
    let seed_for = |id: StageId| derive_seed(cfg.seed, id.label().as_bytes());

    let in1 = StageInput {
        signals: StageSignals::Single(x.clone()),
        seed: seed_for(StageId::S1),
    };
    let (s1, raw1) = run_stage(stages.get(StageId::S1), &in1, &cfg.shifts[0], cfg, need_raw(StageId::S1))?;

    let in2 = StageInput {
        signals: StageSignals::Conditioned {
            noisy: x.clone(),
            s1: s1.clone(),
        },
        seed: seed_for(StageId::S2),
    };
    let (s2, raw2) = run_stage(stages.get(StageId::S2), &in2, &cfg.shifts[1], cfg, need_raw(StageId::S2))?;

    let in3 = StageInput {
        signals: StageSignals::Fusion(assemble_fusion_input(x, &s1, &s2)?),
        seed: seed_for(StageId::S3),
    };
    let (s3, raw3) = run_stage(stages.get(StageId::S3), &in3, &cfg.shifts[2], cfg, need_raw(StageId::S3))?;
    let s3 = s3.fit_to_len(x.len());

    let aggregated = [&s1, &s2, &s3];
    let raws = [raw1.as_ref(), raw2.as_ref(), raw3.as_ref()];
    let members: Vec<&Waveform> = cfg
        .blend
        .members()
        .iter()
        .map(|&id| {
            if cfg.blend_aggregated {
                aggregated[id.index()]
            } else {
                raws[id.index()].unwrap_or(aggregated[id.index()])
            }
        })
        .collect();
    let blended = blend(&members)?;
    Ok(PipelineOutput { s1, s2, s3, blended })
}
