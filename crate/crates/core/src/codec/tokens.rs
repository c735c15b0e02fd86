use ndarray::{Array2, Array3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::conditioning::ConditioningBundle;
use super::rvq::RvqCodebooks;
use super::{CodecError, Result};
use crate::seed::derive_seed;

/// Probabilities are clamped to `[P_FLOOR, 1 − P_FLOOR]` before the log.
pub const P_FLOOR: f64 = 1e-12;

/// `Q × T` codec tokens with a mask of positions to be predicted.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    pub indices: Array2<u32>,
    pub mask: Array2<bool>,
    pub frame_rate: f64,
    /// Length of the waveform the grid was computed from.
    pub num_samples: usize,
}

impl TokenGrid {
    pub fn new(indices: Array2<u32>, frame_rate: f64, num_samples: usize) -> Self {
        let mask = Array2::from_elem(indices.dim(), false);
        Self {
            indices,
            mask,
            frame_rate,
            num_samples,
        }
    }

    pub fn levels(&self) -> usize {
        self.indices.nrows()
    }

    pub fn frames(&self) -> usize {
        self.indices.ncols()
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    pub fn with_mask(mut self, mask: Array2<bool>) -> Result<Self> {
        if mask.dim() != self.indices.dim() {
            return Err(CodecError::ShapeMismatch(format!(
                "mask {:?} vs grid {:?}",
                mask.dim(),
                self.indices.dim()
            )));
        }
        self.mask = mask;
        Ok(self)
    }

    pub fn validate(&self, size: usize) -> Result<()> {
        if self.mask.dim() != self.indices.dim() {
            return Err(CodecError::ShapeMismatch("mask shape differs from indices".into()));
        }
        if let Some(&bad) = self.indices.iter().find(|&&i| i as usize >= size) {
            return Err(CodecError::ShapeMismatch(format!("token {bad} outside codebook of {size}")));
        }
        Ok(())
    }
}

/// Masks `⌈fraction·frames⌉` uniformly chosen positions in each level.
pub fn sample_mask(frames: usize, levels: usize, fraction: f64, seed: u64) -> Result<Array2<bool>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(CodecError::InvalidMaskFraction(fraction));
    }
    let count = ((fraction * frames as f64).ceil() as usize).min(frames);
    let mut mask = Array2::from_elem((levels, frames), false);
    for q in 0..levels {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, format!("mask{q}").as_bytes()));
        for t in sample(&mut rng, frames, count) {
            mask[[q, t]] = true;
        }
    }
    Ok(mask)
}

/// Per-position distributions over the codebook: `Q × T × K`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenProbabilities(pub Array3<f64>);

impl TokenProbabilities {
    pub fn uniform(levels: usize, frames: usize, size: usize) -> Self {
        Self(Array3::from_elem((levels, frames, size), 1.0 / size as f64))
    }

    /// Rows one-hot at `indices`.
    pub fn one_hot(indices: &Array2<u32>, size: usize) -> Self {
        let (q, t) = indices.dim();
        let mut p = Array3::zeros((q, t, size));
        for ((l, i), &j) in indices.indexed_iter() {
            p[[l, i, j as usize]] = 1.0;
        }
        Self(p)
    }

    pub fn dim(&self) -> (usize, usize, usize) {
        self.0.dim()
    }

    /// Largest deviation of a row sum from 1, or an error for a negative or
    /// non-finite entry.
    pub fn check_rows(&self) -> Result<f64> {
        if self.0.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(CodecError::InvalidProbabilities("negative or non-finite entry".into()));
        }
        let (q, t, _) = self.dim();
        let mut worst = 0.0f64;
        for l in 0..q {
            for i in 0..t {
                let s: f64 = self.0.slice(ndarray::s![l, i, ..]).sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        Ok(worst)
    }
}

/// Token predictor: distributions for every grid position given the
/// conditioning.
pub trait Predictor: Send + Sync {
    fn name(&self) -> &str;
    fn predict(&self, cond: &ConditioningBundle, grid: &TokenGrid) -> Result<TokenProbabilities>;
}

/// Uniform over the codebook.
#[derive(Debug, Clone, Copy)]
pub struct UniformPredictor {
    pub size: usize,
}

impl Predictor for UniformPredictor {
    fn name(&self) -> &str {
        "uniform"
    }
    fn predict(&self, _cond: &ConditioningBundle, grid: &TokenGrid) -> Result<TokenProbabilities> {
        Ok(TokenProbabilities::uniform(grid.levels(), grid.frames(), self.size))
    }
}

/// One-hot at a known answer grid.
#[derive(Debug, Clone)]
pub struct OraclePredictor {
    pub truth: Array2<u32>,
    pub size: usize,
}

impl Predictor for OraclePredictor {
    fn name(&self) -> &str {
        "oracle"
    }
    fn predict(&self, _cond: &ConditioningBundle, grid: &TokenGrid) -> Result<TokenProbabilities> {
        if self.truth.dim() != grid.indices.dim() {
            return Err(CodecError::ShapeMismatch(format!(
                "oracle grid {:?} vs request {:?}",
                self.truth.dim(),
                grid.indices.dim()
            )));
        }
        Ok(TokenProbabilities::one_hot(&self.truth, self.size))
    }
}

/// One-hot at the tokens of the first-stage estimate: quantizes the
/// bundle's s1 codec features with the codebooks.
#[derive(Debug, Clone)]
pub struct CopyPredictor {
    pub codebooks: std::sync::Arc<RvqCodebooks>,
}

impl Predictor for CopyPredictor {
    fn name(&self) -> &str {
        "copy"
    }
    fn predict(&self, cond: &ConditioningBundle, grid: &TokenGrid) -> Result<TokenProbabilities> {
        let feats = cond.codec_features_s1();
        if feats.ncols() != self.codebooks.dim() {
            return Err(CodecError::ShapeMismatch(format!(
                "s1 features have {} dims, codebook {}",
                feats.ncols(),
                self.codebooks.dim()
            )));
        }
        let tokens = self.codebooks.quantize(feats.view());
        if tokens.dim() != grid.indices.dim() {
            return Err(CodecError::ShapeMismatch(format!(
                "s1 tokens {:?} vs request {:?}",
                tokens.dim(),
                grid.indices.dim()
            )));
        }
        Ok(TokenProbabilities::one_hot(&tokens, self.codebooks.size()))
    }
}

fn check_shapes(probs: &TokenProbabilities, targets: &Array2<u32>, mask: &Array2<bool>) -> Result<()> {
    let (q, t, _) = probs.dim();
    if targets.dim() != (q, t) || mask.dim() != (q, t) {
        return Err(CodecError::ShapeMismatch(format!(
            "probabilities {:?}, targets {:?}, mask {:?}",
            probs.dim(),
            targets.dim(),
            mask.dim()
        )));
    }
    Ok(())
}

/// Mean negative log-likelihood of the targets over masked positions.
pub fn mlm_loss(probs: &TokenProbabilities, targets: &Array2<u32>, mask: &Array2<bool>) -> Result<f64> {
    check_shapes(probs, targets, mask)?;
    let k = probs.dim().2;
    let mut sum = 0.0;
    let mut count = 0usize;
    for ((l, i), &m) in mask.indexed_iter() {
        if !m {
            continue;
        }
        let target = targets[[l, i]] as usize;
        if target >= k {
            return Err(CodecError::ShapeMismatch(format!("target {target} outside codebook of {k}")));
        }
        let p = probs.0[[l, i, target]].clamp(P_FLOOR, 1.0 - P_FLOOR);
        sum -= p.ln();
        count += 1;
    }
    if count == 0 {
        return Err(CodecError::EmptyMask);
    }
    Ok(sum / count as f64)
}

/// Index of the largest entry; ties go to the lowest index.
fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (j, &p) in row.iter().enumerate() {
        if p > best.1 {
            best = (j, p);
        }
    }
    best.0
}

/// Fills every masked position with its most probable token in a single
/// predictor call and clears the mask.
pub fn greedy_decode(predictor: &dyn Predictor, cond: &ConditioningBundle, grid: &TokenGrid) -> Result<TokenGrid> {
    if grid.masked_count() == 0 {
        return Ok(grid.clone());
    }
    let probs = predictor.predict(cond, grid)?;
    let (q, t, _) = probs.dim();
    if (q, t) != grid.indices.dim() {
        return Err(CodecError::ShapeMismatch(format!(
            "predictor returned {:?} for grid {:?}",
            probs.dim(),
            grid.indices.dim()
        )));
    }
    let mut out = grid.clone();
    for ((l, i), &m) in grid.mask.indexed_iter() {
        if m {
            out.indices[[l, i]] = argmax(probs.0.slice(ndarray::s![l, i, ..])) as u32;
        }
    }
    out.mask.fill(false);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn empty_cond(frames: usize) -> ConditioningBundle {
        ConditioningBundle::new(
            Array2::zeros((frames, 0)),
            Array2::zeros((frames, 0)),
            Array2::zeros((frames, 0)),
            Array2::zeros((0, 0)),
        )
        .unwrap()
    }

    #[test]
    fn mask_counts() {
        assert!(sample_mask(100, 4, 1.0, 1).unwrap().iter().all(|m| *m));
        let m = sample_mask(100, 4, 0.5, 1).unwrap();
        for row in m.rows() {
            assert_eq!(row.iter().filter(|v| **v).count(), 50);
        }
        assert_eq!(m, sample_mask(100, 4, 0.5, 1).unwrap());
        assert_ne!(m, sample_mask(100, 4, 0.5, 2).unwrap());
        assert!(sample_mask(10, 1, 0.0, 0).is_err());
        assert!(sample_mask(10, 1, 1.5, 0).is_err());
    }

    #[test]
    fn uniform_loss_is_log_k() {
        for k in [4usize, 256, 1024] {
            let targets = Array2::from_shape_fn((3, 17), |(l, i)| ((l * 31 + i * 7) % k) as u32);
            let mask = sample_mask(17, 3, 0.6, 4).unwrap();
            let loss = mlm_loss(&TokenProbabilities::uniform(3, 17, k), &targets, &mask).unwrap();
            assert!((loss - (k as f64).ln()).abs() <= 1e-6, "{k}: {loss}");
        }
        assert!((256f64.ln() - 5.545).abs() < 1e-3);
    }

    #[test]
    fn one_hot_loss_is_zero() {
        let targets = Array2::from_shape_fn((2, 9), |(l, i)| ((l + i) % 5) as u32);
        let mask = Array2::from_elem((2, 9), true);
        let loss = mlm_loss(&TokenProbabilities::one_hot(&targets, 5), &targets, &mask).unwrap();
        assert!(loss <= 1e-9);
    }

    #[test]
    fn hand_computed_three_positions() {
        let mut p = Array3::zeros((1, 3, 3));
        let rows = [[0.2, 0.5, 0.3], [0.6, 0.3, 0.1], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]];
        for (i, r) in rows.iter().enumerate() {
            for (j, v) in r.iter().enumerate() {
                p[[0, i, j]] = *v;
            }
        }
        let targets = ndarray::array![[1u32, 2, 0]];
        let mask = ndarray::array![[true, true, true]];
        let direct = -(0.5f64.ln() + 0.1f64.ln() + (1.0f64 / 3.0).ln()) / 3.0;
        let loss = mlm_loss(&TokenProbabilities(p.clone()), &targets, &mask).unwrap();
        assert!((loss - direct).abs() < 1e-9);
        // unmasked positions do not count
        let partial = ndarray::array![[true, false, false]];
        assert!((mlm_loss(&TokenProbabilities(p), &targets, &partial).unwrap() + 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_and_shape_errors() {
        let targets = Array2::<u32>::zeros((2, 4));
        let probs = TokenProbabilities::uniform(2, 4, 8);
        assert!(matches!(
            mlm_loss(&probs, &targets, &Array2::from_elem((2, 4), false)),
            Err(CodecError::EmptyMask)
        ));
        assert!(mlm_loss(&probs, &Array2::zeros((2, 5)), &Array2::from_elem((2, 5), true)).is_err());
    }

    #[test]
    fn greedy_with_oracle_recovers_truth() {
        let truth = Array2::from_shape_fn((4, 30), |(l, i)| ((l * 13 + i * 5) % 16) as u32);
        let grid = TokenGrid::new(Array2::zeros((4, 30)), 86.0, 1000)
            .with_mask(Array2::from_elem((4, 30), true))
            .unwrap();
        let oracle = OraclePredictor { truth: truth.clone(), size: 16 };
        let out = greedy_decode(&oracle, &empty_cond(30), &grid).unwrap();
        assert_eq!(out.indices, truth);
        assert_eq!(out.masked_count(), 0);
    }

    #[test]
    fn greedy_ties_and_unmasked() {
        let grid = TokenGrid::new(Array2::from_elem((1, 4), 3u32), 1.0, 4)
            .with_mask(ndarray::array![[true, false, true, false]])
            .unwrap();
        let out = greedy_decode(&UniformPredictor { size: 8 }, &empty_cond(4), &grid).unwrap();
        assert_eq!(out.indices, ndarray::array![[0u32, 3, 0, 3]]);
        let none = TokenGrid::new(Array2::from_elem((1, 4), 3u32), 1.0, 4);
        assert_eq!(greedy_decode(&UniformPredictor { size: 8 }, &empty_cond(4), &none).unwrap(), none);
    }

    proptest! {
        #[test]
        fn greedy_never_touches_unmasked(seed in 0u64..500, frac in 0.05f64..1.0) {
            let truth = Array2::from_shape_fn((3, 25), |(l, i)| ((seed as usize + l * 7 + i * 3) % 10) as u32);
            let start = Array2::from_shape_fn((3, 25), |(l, i)| ((l + i) % 10) as u32);
            let mask = sample_mask(25, 3, frac, seed).unwrap();
            let grid = TokenGrid::new(start.clone(), 1.0, 25).with_mask(mask.clone()).unwrap();
            let out = greedy_decode(&OraclePredictor { truth: truth.clone(), size: 10 }, &empty_cond(25), &grid).unwrap();
            for ((l, i), &m) in mask.indexed_iter() {
                let expect = if m { truth[[l, i]] } else { start[[l, i]] };
                prop_assert_eq!(out.indices[[l, i]], expect);
            }
        }

        #[test]
        fn bundled_predictor_rows_sum_to_one(k in 2usize..300, t in 1usize..20) {
            let u = TokenProbabilities::uniform(2, t, k);
            prop_assert!(u.check_rows().unwrap() <= 1e-6);
            let idx = Array2::from_shape_fn((2, t), |(l, i)| ((l + i) % k) as u32);
            prop_assert!(TokenProbabilities::one_hot(&idx, k).check_rows().unwrap() <= 1e-6);
        }
    }
}
