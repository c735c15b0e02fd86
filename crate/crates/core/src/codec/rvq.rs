use ndarray::{Array2, Array3, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::frontend::FrontendConfig;
use super::{CodecError, Result};

pub const KMEANS_MAX_ITERS: usize = 50;
pub const KMEANS_TOLERANCE: f64 = 1e-6;

/// Residual vector quantizer: `levels` codebooks of `size` codewords each.
/// Codewords are stored at `f32` precision so they survive the file format
/// unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct RvqCodebooks {
    /// `levels × size × dim`
    codewords: Array3<f64>,
    frontend: FrontendConfig,
}

impl RvqCodebooks {
    pub fn new(codewords: Array3<f64>, frontend: FrontendConfig) -> Result<Self> {
        let (q, k, dim) = codewords.dim();
        if q == 0 || k < 2 || dim == 0 {
            return Err(CodecError::InvalidCodebook(format!("shape {q}×{k}×{dim}")));
        }
        if dim != frontend.n_mels {
            return Err(CodecError::InvalidCodebook(format!(
                "codeword dim {dim} but front-end has {} mel bands",
                frontend.n_mels
            )));
        }
        if codewords.iter().any(|v| !v.is_finite()) {
            return Err(CodecError::InvalidCodebook("non-finite codeword".into()));
        }
        Ok(Self {
            codewords: codewords.mapv(|v| v as f32 as f64),
            frontend,
        })
    }

    pub fn levels(&self) -> usize {
        self.codewords.dim().0
    }

    pub fn size(&self) -> usize {
        self.codewords.dim().1
    }

    pub fn dim(&self) -> usize {
        self.codewords.dim().2
    }

    pub fn frontend(&self) -> &FrontendConfig {
        &self.frontend
    }

    pub fn codewords(&self) -> &Array3<f64> {
        &self.codewords
    }

    pub fn codebook(&self, level: usize) -> ArrayView2<'_, f64> {
        self.codewords.index_axis(Axis(0), level)
    }

    /// Smallest distance between two codewords of the same level.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for q in 0..self.levels() {
            let cb = self.codebook(q);
            for i in 0..self.size() {
                for j in i + 1..self.size() {
                    best = best.min(sq_dist(cb.row(i), cb.row(j)).sqrt());
                }
            }
        }
        best
    }

    /// Greedy level-by-level quantization of one frame. Returns the indices
    /// and the residual norm after each level.
    pub fn quantize_frame(&self, frame: ArrayView1<f64>, levels: usize) -> (Vec<u32>, Vec<f64>) {
        let mut residual = frame.to_owned();
        let mut idx = Vec::with_capacity(levels);
        let mut norms = Vec::with_capacity(levels);
        for q in 0..levels.min(self.levels()) {
            let cb = self.codebook(q);
            let j = nearest(cb, residual.view());
            residual -= &cb.row(j);
            idx.push(j as u32);
            norms.push(residual.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
        (idx, norms)
    }

    /// Quantizes every row of `frames` (T × dim) into a `levels × T` grid.
    pub fn quantize(&self, frames: ArrayView2<f64>) -> Array2<u32> {
        let t = frames.nrows();
        let q = self.levels();
        let cols: Vec<Vec<u32>> = (0..t)
            .into_par_iter()
            .map(|i| self.quantize_frame(frames.row(i), q).0)
            .collect();
        Array2::from_shape_fn((q, t), |(l, i)| cols[i][l])
    }

    /// Sum of the codewords selected in the first `levels` rows of `indices`.
    pub fn reconstruct(&self, indices: &Array2<u32>, levels: usize) -> Array2<f64> {
        let t = indices.ncols();
        let mut out = Array2::zeros((t, self.dim()));
        for q in 0..levels.min(self.levels()).min(indices.nrows()) {
            let cb = self.codebook(q);
            for (i, mut row) in out.rows_mut().into_iter().enumerate() {
                row += &cb.row(indices[[q, i]] as usize);
            }
        }
        out
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the codeword closest to `x`; ties go to the lowest index.
pub(crate) fn nearest(cb: ArrayView2<f64>, x: ArrayView1<f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, c) in cb.rows().into_iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

/// Training settings for [`train_rvq_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RvqTrainConfig {
    pub levels: usize,
    pub size: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tolerance: f64,
    /// Pin codeword 0 of every level to the zero vector. Guarantees the
    /// per-frame residual norm never grows from one level to the next and
    /// that silent frames quantize to exact zero.
    pub reserve_zero: bool,
}

impl RvqTrainConfig {
    pub fn new(levels: usize, size: usize, seed: u64) -> Self {
        Self {
            levels,
            size,
            seed,
            max_iters: KMEANS_MAX_ITERS,
            tolerance: KMEANS_TOLERANCE,
            reserve_zero: false,
        }
    }
}

/// Level-by-level k-means (k-means++ seeding) without a pinned zero codeword.
pub fn train_rvq(frames: ArrayView2<f64>, levels: usize, size: usize, seed: u64, frontend: FrontendConfig) -> Result<RvqCodebooks> {
    train_rvq_with(frames, &RvqTrainConfig::new(levels, size, seed), frontend)
}

pub fn train_rvq_with(frames: ArrayView2<f64>, cfg: &RvqTrainConfig, frontend: FrontendConfig) -> Result<RvqCodebooks> {
    let (n, dim) = frames.dim();
    if cfg.levels == 0 || cfg.size < 2 {
        return Err(CodecError::InvalidCodebook(format!("{} levels of {} codewords", cfg.levels, cfg.size)));
    }
    if n < cfg.size || dim == 0 {
        return Err(CodecError::InsufficientData { frames: n, codewords: cfg.size });
    }
    if frames.iter().any(|v| !v.is_finite()) {
        return Err(CodecError::InvalidCodebook("non-finite training frame".into()));
    }
    let mut residual = frames.to_owned();
    let mut books = Array3::zeros((cfg.levels, cfg.size, dim));
    for q in 0..cfg.levels {
        let seed = crate::seed::derive_seed(cfg.seed, format!("level{q}").as_bytes());
        let mut cb = kmeans(residual.view(), cfg, seed);
        cb.mapv_inplace(|v| v as f32 as f64);
        separate_duplicates(&mut cb, seed);
        let assign: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|i| nearest(cb.view(), residual.row(i)))
            .collect();
        for (i, &j) in assign.iter().enumerate() {
            let c = cb.row(j).to_owned();
            let mut r = residual.row_mut(i);
            r -= &c;
        }
        books.index_axis_mut(Axis(0), q).assign(&cb);
    }
    RvqCodebooks::new(books, frontend)
}

fn kmeans(data: ArrayView2<f64>, cfg: &RvqTrainConfig, seed: u64) -> Array2<f64> {
    let (n, dim) = data.dim();
    let k = cfg.size;
    let pinned = usize::from(cfg.reserve_zero);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = Array2::<f64>::zeros((k, dim));

    // k-means++: the pinned zero (if any) counts as an already chosen center
    let mut d2: Vec<f64> = if pinned == 1 {
        (0..n).map(|i| data.row(i).iter().map(|v| v * v).sum()).collect()
    } else {
        let first = rng.gen_range(0..n);
        centers.row_mut(0).assign(&data.row(first));
        (0..n).map(|i| sq_dist(data.row(i), data.row(first))).collect()
    };
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if u < d {
                    chosen = i;
                    break;
                }
                u -= d;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.row_mut(c).assign(&data.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.row(i), data.row(pick)));
        }
    }

    for _ in 0..cfg.max_iters {
        let assign: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|i| nearest(centers.view(), data.row(i)))
            .collect();
        let mut sums = Array2::<f64>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for (i, &j) in assign.iter().enumerate() {
            let mut s = sums.row_mut(j);
            s += &data.row(i);
            counts[j] += 1;
        }
        let mut movement = 0.0f64;
        let mut empty = Vec::new();
        for c in pinned..k {
            if counts[c] == 0 {
                empty.push(c);
                continue;
            }
            let new = sums.row(c).mapv(|v| v / counts[c] as f64);
            movement = movement.max(sq_dist(new.view(), centers.row(c)).sqrt());
            centers.row_mut(c).assign(&new);
        }
        // re-seed empty clusters at the points worst served by their center
        if !empty.is_empty() {
            let mut errs: Vec<(f64, usize)> = (0..n)
                .map(|i| (sq_dist(data.row(i), centers.row(assign[i])), i))
                .collect();
            errs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for (c, &(_, i)) in empty.iter().zip(&errs) {
                centers.row_mut(*c).assign(&data.row(i));
            }
            movement = f64::INFINITY;
        }
        if movement < cfg.tolerance {
            break;
        }
    }
    centers
}

/// Nudges codewords that coincide with an earlier one (possible when the
/// data has fewer distinct points than codewords) so every level keeps
/// distinct entries.
fn separate_duplicates(cb: &mut Array2<f64>, seed: u64) {
    let (k, dim) = cb.dim();
    let scale = cb.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0) * 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6475_706c);
    for j in 1..k {
        while (0..j).any(|i| sq_dist(cb.row(i), cb.row(j)) == 0.0) {
            for d in 0..dim {
                let g: f64 = StandardNormal.sample(&mut rng);
                cb[[j, d]] = (cb[[j, d]] + scale * g) as f32 as f64;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn fe(dim: usize) -> FrontendConfig {
        FrontendConfig {
            n_mels: dim,
            ..FrontendConfig::default()
        }
    }

    #[test]
    fn exact_cover_with_one_level() {
        let pts = array![[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [3.0, 3.0]];
        let cb = train_rvq(pts.view(), 1, 4, 7, fe(2)).unwrap();
        let mut got: Vec<Vec<f64>> = cb.codebook(0).rows().into_iter().map(|r| r.to_vec()).collect();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut want: Vec<Vec<f64>> = pts.rows().into_iter().map(|r| r.to_vec()).collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got, want);
        let grid = cb.quantize(pts.view());
        assert_eq!(cb.reconstruct(&grid, 1), pts);
    }

    /// Points `a_i + b_j` from two small well-separated codebooks.
    fn compositional() -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let a = array![[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]];
        let b = array![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let mut pts = Array2::zeros((16 * 8, 2));
        for r in 0..8 {
            for i in 0..4 {
                for j in 0..4 {
                    let row = r * 16 + i * 4 + j;
                    pts[[row, 0]] = a[[i, 0]] + b[[j, 0]];
                    pts[[row, 1]] = a[[i, 1]] + b[[j, 1]];
                }
            }
        }
        (pts, a, b)
    }

    #[test]
    fn second_level_reduces_error() {
        let (pts, _, _) = compositional();
        let cb = train_rvq(pts.view(), 2, 4, 3, fe(2)).unwrap();
        let grid = cb.quantize(pts.view());
        let err = |levels| {
            let rec = cb.reconstruct(&grid, levels);
            (&pts - &rec).mapv(|v| v * v).sum()
        };
        assert!(err(2) < err(1), "{} vs {}", err(2), err(1));
        assert!(err(2) < 1e-9);
        // re-encoding the reconstruction gives the same grid
        assert_eq!(cb.quantize(cb.reconstruct(&grid, 2).view()), grid);
    }

    #[test]
    fn training_is_deterministic() {
        let (pts, _, _) = compositional();
        let a = train_rvq(pts.view(), 2, 4, 11, fe(2)).unwrap();
        let b = train_rvq(pts.view(), 2, 4, 11, fe(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn codewords_are_distinct_even_with_repeated_data() {
        let pts = Array2::from_shape_fn((20, 3), |(i, d)| ((i % 3) * (d + 1)) as f64);
        let cb = train_rvq(pts.view(), 2, 8, 1, fe(3)).unwrap();
        assert!(cb.min_pairwise_distance() > 0.0);
    }

    #[test]
    fn reserved_zero_keeps_prefix_property() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts = Array2::from_shape_fn((400, 5), |_| rng.gen_range(0.0..1.0));
        let mut cfg = RvqTrainConfig::new(4, 16, 9);
        cfg.reserve_zero = true;
        let cb = train_rvq_with(pts.view(), &cfg, fe(5)).unwrap();
        for q in 0..4 {
            assert!(cb.codebook(q).row(0).iter().all(|v| *v == 0.0));
        }
        let test = Array2::from_shape_fn((300, 5), |_| rng.gen_range(-1.0..2.0));
        for row in test.rows() {
            let (_, norms) = cb.quantize_frame(row, 4);
            let start = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norms[0] <= start);
            assert!(norms.windows(2).all(|w| w[1] <= w[0]));
        }
        let zero = Array2::zeros((3, 5));
        assert!(cb.quantize(zero.view()).iter().all(|&i| i == 0));
    }

    #[test]
    fn errors() {
        let pts = Array2::<f64>::zeros((3, 2));
        assert!(matches!(
            train_rvq(pts.view(), 1, 4, 0, fe(2)),
            Err(CodecError::InsufficientData { .. })
        ));
        assert!(train_rvq(pts.view(), 0, 2, 0, fe(2)).is_err());
    }

    #[test]
    fn nearest_ties_go_low() {
        let cb = array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0]];
        assert_eq!(nearest(cb.view(), array![0.0, 0.0].view()), 0);
    }
}
