use ndarray::{concatenate, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::frontend::Frontend;
use super::{CodecError, Result};
use crate::audio::Waveform;

/// Streams whose frame counts differ from the codec's by more than this
/// are rejected rather than resampled.
pub const MAX_FRAME_SKEW: usize = 2;
pub const LOG_MEL_FLOOR: f64 = 1e-5;

/// Frame-level features of the noisy input (the self-supervised feature
/// slot). Must produce `frames × dim`.
pub trait FeatureExtractor: Send + Sync {
    fn extract(&self, w: &Waveform) -> Result<Array2<f64>>;
}

/// Default extractor: natural-log mel magnitudes of the codec front-end.
#[derive(Debug, Clone)]
pub struct LogMelExtractor {
    pub frontend: Frontend,
}

impl FeatureExtractor for LogMelExtractor {
    fn extract(&self, w: &Waveform) -> Result<Array2<f64>> {
        Ok(self.frontend.mel(w)?.mapv(|v| (v + LOG_MEL_FLOOR).ln()))
    }
}

/// Maps the noisy input's codec features before conditioning.
pub trait PreEncoder: Send + Sync {
    fn encode(&self, features: &Array2<f64>) -> Array2<f64>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityPreEncoder;

impl PreEncoder for IdentityPreEncoder {
    fn encode(&self, features: &Array2<f64>) -> Array2<f64> {
        features.clone()
    }
}

/// How the concatenated streams are projected to the model width.
#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    Identity,
    Zero { d_model: usize },
    /// Random matrix with orthonormal columns (`d_model ≤` input width).
    SeededOrthonormal { d_model: usize, seed: u64 },
    Matrix(Array2<f64>),
}

impl Projection {
    pub fn resolve(&self, d_in: usize) -> Result<Array2<f64>> {
        match self {
            Self::Identity => Ok(Array2::eye(d_in)),
            Self::Zero { d_model } => Ok(Array2::zeros((d_in, *d_model))),
            Self::SeededOrthonormal { d_model, seed } => seeded_orthonormal(d_in, *d_model, *seed),
            Self::Matrix(m) => Ok(m.clone()),
        }
    }
}

/// `d_in × d_out` matrix with orthonormal columns from Gram-Schmidt on a
/// seeded Gaussian draw.
pub fn seeded_orthonormal(d_in: usize, d_out: usize, seed: u64) -> Result<Array2<f64>> {
    if d_out > d_in {
        return Err(CodecError::ShapeMismatch(format!("cannot fit {d_out} orthonormal columns in {d_in} dims")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Array2::<f64>::from_shape_fn((d_in, d_out), |_| StandardNormal.sample(&mut rng));
    for j in 0..d_out {
        for i in 0..j {
            let dot = m.column(i).dot(&m.column(j));
            let ci = m.column(i).to_owned();
            m.column_mut(j).scaled_add(-dot, &ci);
        }
        let norm = m.column(j).dot(&m.column(j)).sqrt();
        if norm < 1e-12 {
            return Err(CodecError::ShapeMismatch("degenerate random projection".into()));
        }
        m.column_mut(j).mapv_inplace(|v| v / norm);
    }
    Ok(m)
}

/// The three conditioning streams on a common frame axis plus the
/// projection applied to their concatenation.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningBundle {
    ssl_features: Array2<f64>,
    codec_features_s1: Array2<f64>,
    preencoded_noisy: Array2<f64>,
    projection: Array2<f64>,
}

impl ConditioningBundle {
    pub fn new(
        ssl_features: Array2<f64>,
        codec_features_s1: Array2<f64>,
        preencoded_noisy: Array2<f64>,
        projection: Array2<f64>,
    ) -> Result<Self> {
        let t = ssl_features.nrows();
        if codec_features_s1.nrows() != t || preencoded_noisy.nrows() != t {
            return Err(CodecError::ShapeMismatch(format!(
                "stream frame counts {t}, {}, {}",
                codec_features_s1.nrows(),
                preencoded_noisy.nrows()
            )));
        }
        let d_in = ssl_features.ncols() + codec_features_s1.ncols() + preencoded_noisy.ncols();
        if projection.nrows() != d_in {
            return Err(CodecError::ShapeMismatch(format!(
                "projection has {} rows for {d_in} input features",
                projection.nrows()
            )));
        }
        if projection.iter().any(|v| !v.is_finite()) {
            return Err(CodecError::ShapeMismatch("non-finite projection".into()));
        }
        Ok(Self {
            ssl_features,
            codec_features_s1,
            preencoded_noisy,
            projection,
        })
    }

    pub fn frames(&self) -> usize {
        self.ssl_features.nrows()
    }

    pub fn ssl_features(&self) -> &Array2<f64> {
        &self.ssl_features
    }

    pub fn codec_features_s1(&self) -> &Array2<f64> {
        &self.codec_features_s1
    }

    pub fn preencoded_noisy(&self) -> &Array2<f64> {
        &self.preencoded_noisy
    }

    pub fn projection(&self) -> &Array2<f64> {
        &self.projection
    }

    /// `[φ(x); E(ŝ₁); E_pre(E(x))] · P`, `frames × d_model`.
    pub fn conditioning(&self) -> Array2<f64> {
        let cat = concatenate(
            Axis(1),
            &[self.ssl_features.view(), self.codec_features_s1.view(), self.preencoded_noisy.view()],
        )
        .expect("row counts checked at construction");
        cat.dot(&self.projection)
    }
}

/// Nearest-frame resampling of `stream` to `target` rows. Fails when the
/// counts differ by more than [`MAX_FRAME_SKEW`].
pub fn align_frames(stream: &Array2<f64>, target: usize) -> Result<Array2<f64>> {
    let n = stream.nrows();
    if n.abs_diff(target) > MAX_FRAME_SKEW || (n == 0 && target > 0) {
        return Err(CodecError::FrameAlignmentFailure { stream: n, codec: target });
    }
    if n == target {
        return Ok(stream.clone());
    }
    let rows: Vec<usize> = (0..target)
        .map(|i| (((i as f64 + 0.5) * n as f64 / target as f64) as usize).min(n - 1))
        .collect();
    Ok(stream.select(Axis(0), &rows))
}

/// Builds the conditioning bundle for `(x, s1)` on the codec frame grid of `x`.
pub fn assemble_conditioning(
    x: &Waveform,
    s1: &Waveform,
    frontend: &Frontend,
    extractor: &dyn FeatureExtractor,
    pre_encoder: &dyn PreEncoder,
    projection: &Projection,
) -> Result<ConditioningBundle> {
    if x.sample_rate() != s1.sample_rate() {
        return Err(CodecError::RateMismatch(x.sample_rate(), s1.sample_rate()));
    }
    if x.len() != s1.len() {
        return Err(CodecError::ShapeMismatch(format!("x has {} samples, s1 {}", x.len(), s1.len())));
    }
    let codec_x = frontend.features(x)?;
    let t = codec_x.nrows();
    let ssl = align_frames(&extractor.extract(x)?, t)?;
    let s1_feats = align_frames(&frontend.features(s1)?, t)?;
    let pre = align_frames(&pre_encoder.encode(&codec_x), t)?;
    let d_in = ssl.ncols() + s1_feats.ncols() + pre.ncols();
    ConditioningBundle::new(ssl, s1_feats, pre, projection.resolve(d_in)?)
}
