//! Token machinery of the refinement stage: a residual vector quantizer over
//! mel frames with a Griffin-Lim decoder, mask sampling, conditioning
//! assembly, masked-token cross-entropy and single-pass greedy decoding.

mod conditioning;
pub mod file;
mod frontend;
mod rvq;
mod tokens;

use std::path::PathBuf;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use conditioning::{
    align_frames, assemble_conditioning, seeded_orthonormal, ConditioningBundle, FeatureExtractor, IdentityPreEncoder,
    LogMelExtractor, PreEncoder, Projection, LOG_MEL_FLOOR, MAX_FRAME_SKEW,
};
pub use frontend::{compress, expand, Frontend, FrontendConfig, COMPRESSION_KNEE, GRIFFIN_LIM_ITERS, NNLS_ITERS};
pub use rvq::{train_rvq, train_rvq_with, RvqCodebooks, RvqTrainConfig, KMEANS_MAX_ITERS, KMEANS_TOLERANCE};
pub use tokens::{
    greedy_decode, mlm_loss, sample_mask, CopyPredictor, OraclePredictor, Predictor, TokenGrid, TokenProbabilities,
    UniformPredictor, P_FLOOR,
};

use crate::audio::{resample, AudioError, Waveform};
use crate::pipeline::{PipelineError, ReceptiveContext, Stage, StageInput, StageSignals};

pub const DEFAULT_LEVELS: usize = 4;
pub const DEFAULT_CODEBOOK_SIZE: usize = 256;
const PROJECTION_SEED: u64 = 0x5052_4f4a;

pub type Result<T> = std::result::Result<T, CodecError>;

#[derive(Error, Debug)]
pub enum CodecError {
    #[error("{frames} training frames cannot fill {codewords} codewords")]
    InsufficientData { frames: usize, codewords: usize },
    #[error("invalid codebook: {0}")]
    InvalidCodebook(String),
    #[error("corrupt codebook file: {0}")]
    CorruptCodebook(String),
    #[error("codebook content hash does not match")]
    HashMismatch,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mask fraction {0} outside (0, 1]")]
    InvalidMaskFraction(f64),
    #[error("invalid probabilities: {0}")]
    InvalidProbabilities(String),
    #[error("no masked positions")]
    EmptyMask,
    #[error("empty input signal")]
    EmptyInput,
    #[error("feature stream has {stream} frames but the codec grid has {codec}")]
    FrameAlignmentFailure { stream: usize, codec: usize },
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
    #[error(transparent)]
    Audio(#[from] AudioError),
}

impl From<CodecError> for PipelineError {
    fn from(e: CodecError) -> Self {
        PipelineError::Stage(e.to_string())
    }
}

/// Codebooks bound to their analysis front-end.
#[derive(Debug, Clone)]
pub struct Codec {
    codebooks: Arc<RvqCodebooks>,
    frontend: Frontend,
}

impl Codec {
    pub fn new(codebooks: RvqCodebooks) -> Result<Self> {
        let frontend = Frontend::new(*codebooks.frontend())?;
        Ok(Self {
            codebooks: Arc::new(codebooks),
            frontend,
        })
    }

    pub fn codebooks(&self) -> &Arc<RvqCodebooks> {
        &self.codebooks
    }

    pub fn frontend(&self) -> &Frontend {
        &self.frontend
    }

    pub fn sample_rate(&self) -> u32 {
        self.frontend.config().sample_rate
    }

    fn at_rate(&self, w: &Waveform) -> Waveform {
        if w.sample_rate() == self.sample_rate() {
            w.clone()
        } else {
            resample(w, self.sample_rate())
        }
    }

    /// Quantizes the mel frames of `w` (resampled to the codec rate).
    pub fn encode(&self, w: &Waveform) -> Result<TokenGrid> {
        let w = self.at_rate(w);
        let feats = self.frontend.features(&w)?;
        Ok(TokenGrid::new(
            self.codebooks.quantize(feats.view()),
            self.frontend.config().frame_rate(),
            w.len(),
        ))
    }

    /// Per-frame residual norm after each level, `T × Q`.
    pub fn residual_trace(&self, w: &Waveform) -> Result<Array2<f64>> {
        let feats = self.frontend.features(&self.at_rate(w))?;
        let q = self.codebooks.levels();
        let mut out = Array2::zeros((feats.nrows(), q));
        for (i, row) in feats.rows().into_iter().enumerate() {
            let (_, norms) = self.codebooks.quantize_frame(row, q);
            out.row_mut(i).assign(&ndarray::Array1::from(norms));
        }
        Ok(out)
    }

    /// Waveform at the codec rate from all levels of `grid`.
    pub fn decode(&self, grid: &TokenGrid) -> Result<Waveform> {
        self.decode_levels(grid, self.codebooks.levels())
    }

    /// Waveform from the first `levels` levels of `grid`.
    pub fn decode_levels(&self, grid: &TokenGrid, levels: usize) -> Result<Waveform> {
        grid.validate(self.codebooks.size())?;
        let mel = self.codebooks.reconstruct(&grid.indices, levels);
        self.frontend.synthesize(&mel, grid.num_samples)
    }

    /// `decode(encode(w))`, returned at the rate and length of `w`.
    pub fn round_trip(&self, w: &Waveform, levels: usize) -> Result<Waveform> {
        let grid = self.encode(w)?;
        let y = self.decode_levels(&grid, levels)?;
        Ok(resample(&y, w.sample_rate()).fit_to_len(w.len()))
    }
}

/// Trains codebooks on the mel frames of `corpus`, using at most
/// `max_frames` frames drawn without replacement from the seed. Codeword 0
/// of every level is pinned to zero.
pub fn train_codec(
    corpus: &[Waveform],
    frontend: FrontendConfig,
    levels: usize,
    size: usize,
    seed: u64,
    max_frames: usize,
) -> Result<RvqCodebooks> {
    let fe = Frontend::new(frontend)?;
    let feats: Vec<Array2<f64>> = corpus
        .iter()
        .filter(|w| !w.is_empty())
        .map(|w| fe.features(w))
        .collect::<Result<_>>()?;
    let views: Vec<_> = feats.iter().map(|f| f.view()).collect();
    if views.is_empty() {
        return Err(CodecError::InsufficientData { frames: 0, codewords: size });
    }
    let all = ndarray::concatenate(Axis(0), &views).map_err(|e| CodecError::ShapeMismatch(e.to_string()))?;
    let data = if all.nrows() > max_frames {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::derive_seed(seed, b"frames"));
        let mut rows = sample(&mut rng, all.nrows(), max_frames).into_vec();
        rows.sort_unstable();
        all.select(Axis(0), &rows)
    } else {
        all
    };
    let mut cfg = RvqTrainConfig::new(levels, size, seed);
    cfg.reserve_zero = true;
    train_rvq_with(data.view(), &cfg, frontend)
}

/// Refinement stage: encodes the noisy input, masks every token, predicts
/// them in one greedy pass from the conditioning and decodes.
pub struct TokenStage {
    codec: Codec,
    predictor: Box<dyn Predictor>,
    extractor: Box<dyn FeatureExtractor>,
    pre_encoder: Box<dyn PreEncoder>,
    projection: Projection,
}

impl TokenStage {
    /// Log-mel extractor, identity pre-encoder and a seeded orthonormal
    /// projection to `2·n_mels` dimensions.
    pub fn new(codec: Codec, predictor: Box<dyn Predictor>) -> Self {
        let d_model = 2 * codec.frontend().config().n_mels;
        let extractor = Box::new(LogMelExtractor {
            frontend: codec.frontend().clone(),
        });
        Self {
            codec,
            predictor,
            extractor,
            pre_encoder: Box::new(IdentityPreEncoder),
            projection: Projection::SeededOrthonormal {
                d_model,
                seed: PROJECTION_SEED,
            },
        }
    }

    pub fn with_components(
        codec: Codec,
        predictor: Box<dyn Predictor>,
        extractor: Box<dyn FeatureExtractor>,
        pre_encoder: Box<dyn PreEncoder>,
        projection: Projection,
    ) -> Self {
        Self {
            codec,
            predictor,
            extractor,
            pre_encoder,
            projection,
        }
    }

    pub fn codec(&self) -> &Codec {
        &self.codec
    }

    fn run(&self, x: &Waveform, s1: &Waveform) -> Result<Waveform> {
        let grid = self.codec.encode(x)?;
        let mask = Array2::from_elem(grid.indices.dim(), true);
        let grid = grid.with_mask(mask)?;
        let cond = assemble_conditioning(
            x,
            s1,
            self.codec.frontend(),
            self.extractor.as_ref(),
            self.pre_encoder.as_ref(),
            &self.projection,
        )?;
        let filled = greedy_decode(self.predictor.as_ref(), &cond, &grid)?;
        Ok(self.codec.decode(&filled)?.fit_to_len(x.len()))
    }
}

impl Stage for TokenStage {
    fn name(&self) -> &str {
        "token"
    }
    fn expected_rate(&self) -> Option<u32> {
        Some(self.codec.sample_rate())
    }
    fn context(&self) -> ReceptiveContext {
        ReceptiveContext::FullSignal
    }
    fn enhance(&self, input: &StageInput) -> std::result::Result<Waveform, PipelineError> {
        let (x, s1) = match &input.signals {
            StageSignals::Single(x) => (x, x),
            StageSignals::Conditioned { noisy, s1 } => (noisy, s1),
            StageSignals::Fusion(f) => (f.noisy(), f.s2()),
        };
        if x.is_empty() {
            return Ok(x.clone());
        }
        Ok(self.run(x, s1)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{multiscale_mel_distance, MultiScaleMelConfig};
    use crate::pipeline::{invoke, single_input};
    use crate::synth;

    fn small_codec(levels: usize, size: usize) -> Codec {
        let corpus: Vec<Waveform> = (0..4).map(|s| synth::speech_like(44100, 2.0, s)).collect();
        let cb = train_codec(&corpus, FrontendConfig::default(), levels, size, 5, 2000).unwrap();
        Codec::new(cb).unwrap()
    }

    #[test]
    fn silence_round_trips_to_silence() {
        let codec = small_codec(2, 16);
        let z = Waveform::zeros(20000, 44100).unwrap();
        let grid = codec.encode(&z).unwrap();
        assert!(grid.indices.iter().all(|&i| i == 0));
        assert!(codec.decode(&grid).unwrap().energy() <= 1e-6);
    }

    #[test]
    fn encode_is_deterministic_and_prefix_monotone() {
        let codec = small_codec(4, 32);
        let w = synth::speech_like(44100, 1.5, 9);
        assert_eq!(codec.encode(&w).unwrap(), codec.encode(&w).unwrap());
        let trace = codec.residual_trace(&w).unwrap();
        for row in trace.rows() {
            assert!(row.windows(2).into_iter().all(|p| p[1] <= p[0]));
        }
        let zeros = TokenGrid::new(Array2::zeros((4, 10)), 86.0, 5000);
        assert_eq!(codec.decode(&zeros).unwrap(), codec.decode(&zeros).unwrap());
    }

    #[test]
    fn more_levels_decode_closer() {
        let codec = small_codec(4, 32);
        let cfg = MultiScaleMelConfig::default();
        let (mut d1, mut d4) = (0.0, 0.0);
        for seed in 12..15 {
            let w = synth::speech_like(44100, 1.5, seed);
            let grid = codec.encode(&w).unwrap();
            d1 += multiscale_mel_distance(&w, &codec.decode_levels(&grid, 1).unwrap(), &cfg).unwrap();
            d4 += multiscale_mel_distance(&w, &codec.decode_levels(&grid, 4).unwrap(), &cfg).unwrap();
        }
        assert!(d4 < d1, "{d4} vs {d1}");
    }

    #[test]
    fn copy_stage_is_round_trip_of_s1() {
        let codec = small_codec(2, 16);
        let x = synth::speech_like(44100, 1.0, 3);
        let s1 = x.scaled(0.6);
        let stage = TokenStage::new(
            codec.clone(),
            Box::new(CopyPredictor {
                codebooks: codec.codebooks().clone(),
            }),
        );
        let input = StageInput {
            signals: StageSignals::Conditioned {
                noisy: x.clone(),
                s1: s1.clone(),
            },
            seed: 0,
        };
        let y = invoke(&stage, &input).unwrap();
        assert_eq!(y.len(), x.len());
        let expect = codec.decode(&codec.encode(&s1).unwrap()).unwrap();
        assert_eq!(y, expect);
        assert_eq!(y, invoke(&stage, &input).unwrap());
    }

    #[test]
    fn stage_resamples_foreign_rates() {
        let codec = small_codec(1, 8);
        let stage = TokenStage::new(codec.clone(), Box::new(UniformPredictor { size: 8 }));
        let x = synth::speech_like(16000, 0.7, 2);
        let y = invoke(&stage, &single_input(&x, 0)).unwrap();
        assert_eq!((y.len(), y.sample_rate()), (x.len(), 16000));
    }
}
