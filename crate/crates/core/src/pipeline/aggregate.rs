use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stage::{StageInput, StageSignals};
use super::{PipelineError, Result};
use crate::audio::Waveform;
use crate::seed::derive_seed;

pub const DEFAULT_SHIFT_COUNT: usize = 10;
/// Span of the default offset draw, in seconds.
pub const DEFAULT_SHIFT_SPAN_S: f64 = 0.25;
const DEFAULT_SHIFT_SEED: u64 = 0x5348_4946_5453;

/// Set of sample offsets for shift-trick aggregation. Copies are advanced
/// by each offset with zeros at the tail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftConfig {
    pub offsets: Vec<usize>,
}

impl ShiftConfig {
    /// A single unshifted pass.
    pub fn single() -> Self {
        Self { offsets: vec![0] }
    }

    /// `count` offsets, one drawn uniformly per stratum of `[0, span)`, the
    /// first forced to 0.
    pub fn stratified(count: usize, span: usize, seed: u64) -> Self {
        let count = count.max(1).min(span.max(1));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let offsets = (0..count)
            .map(|i| {
                let lo = i * span / count;
                let hi = ((i + 1) * span / count).max(lo + 1);
                if i == 0 {
                    0
                } else {
                    rng.gen_range(lo..hi)
                }
            })
            .collect();
        Self { offsets }
    }

    /// The default: 10 stratified offsets over the first 0.25 s.
    pub fn default_for_rate(sample_rate: u32) -> Self {
        Self::stratified_for_rate(DEFAULT_SHIFT_COUNT, DEFAULT_SHIFT_SPAN_S, sample_rate)
    }

    /// `count` stratified offsets over the first `span_s` seconds, drawn
    /// from the pinned default seed.
    pub fn stratified_for_rate(count: usize, span_s: f64, sample_rate: u32) -> Self {
        let span = (span_s.max(0.0) * sample_rate as f64) as usize;
        Self::stratified(count, span, DEFAULT_SHIFT_SEED)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.offsets.is_empty() {
            return Err(PipelineError::InvalidConfig("shift offsets must be nonempty".into()));
        }
        let bound = (sample_rate / 2) as usize;
        let mut seen = self.offsets.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(PipelineError::InvalidConfig("shift offsets must be distinct".into()));
        }
        if let Some(&big) = seen.last().filter(|&&m| m >= bound) {
            return Err(PipelineError::InvalidConfig(format!(
                "shift offset {big} must be below {bound} samples"
            )));
        }
        Ok(())
    }

    pub fn max_offset(&self) -> usize {
        self.offsets.iter().copied().max().unwrap_or(0)
    }
}

fn advance(w: &Waveform, tau: usize) -> Waveform {
    let s = w.samples();
    let tau = tau.min(s.len());
    let mut out = Vec::with_capacity(s.len());
    out.extend_from_slice(&s[tau..]);
    out.resize(s.len(), 0.0);
    w.with_samples(out)
}

/// Shift-trick aggregation. For each offset τ the whole input bundle is
/// advanced by τ, processed by `run` with seed `derive_seed(seed, τ)`, and
/// moved back; each output sample averages the copies that cover it. Samples
/// covered by no copy (only possible when 0 is not an offset) come from an
/// extra unshifted pass.
pub fn shift_aggregate<F>(run: F, input: &StageInput, cfg: &ShiftConfig) -> Result<Waveform>
where
    F: Fn(&StageInput) -> Result<Waveform> + Sync,
{
    cfg.validate(input.signals.sample_rate())?;
    let len = input.signals.len();
    if cfg.offsets == [0] {
        return run(&StageInput {
            signals: input.signals.clone(),
            seed: derive_seed(input.seed, &0u64.to_le_bytes()),
        });
    }
    let outputs: Vec<Waveform> = cfg
        .offsets
        .par_iter()
        .map(|&tau| {
            let shifted = StageInput {
                signals: input.signals.map(|w| advance(w, tau)),
                seed: derive_seed(input.seed, &(tau as u64).to_le_bytes()),
            };
            run(&shifted)
        })
        .collect::<Result<_>>()?;

    let mut sum = vec![0.0f64; len];
    let mut count = vec![0u32; len];
    for (&tau, y) in cfg.offsets.iter().zip(&outputs) {
        let y = y.samples();
        for t in tau.min(len)..len {
            sum[t] += y[t - tau] as f64;
            count[t] += 1;
        }
    }
    let mut fallback: Option<Waveform> = None;
    let min_tau = cfg.offsets.iter().copied().min().unwrap_or(0).min(len);
    if min_tau > 0 {
        fallback = Some(run(&StageInput {
            signals: input.signals.clone(),
            seed: derive_seed(input.seed, b"unshifted"),
        })?);
    }
    let out: Vec<f64> = (0..len)
        .map(|t| match (count[t], &fallback) {
            (0, Some(f)) => f.samples()[t] as f64,
            (c, _) => sum[t] / c as f64,
        })
        .collect();
    Ok(input.signals.primary().with_f64(&out))
}

/// Sliding-window settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlidingWindowConfig {
    pub window_s: f64,
    pub overlap_fraction: f64,
}

impl Default for SlidingWindowConfig {
    fn default() -> Self {
        Self {
            window_s: 2.0,
            overlap_fraction: 0.5,
        }
    }
}

impl SlidingWindowConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_s > 0.0) {
            return Err(PipelineError::InvalidConfig(format!("window length {} s", self.window_s)));
        }
        if !(self.overlap_fraction > 0.0 && self.overlap_fraction < 1.0) {
            return Err(PipelineError::InvalidConfig(format!(
                "overlap fraction {} outside (0, 1)",
                self.overlap_fraction
            )));
        }
        Ok(())
    }

    /// Window and hop in samples.
    pub fn frame(&self, sample_rate: u32) -> (usize, usize) {
        let win = ((self.window_s * sample_rate as f64).round() as usize).max(1);
        let hop = (((1.0 - self.overlap_fraction) * win as f64).round() as usize).clamp(1, win);
        (win, hop)
    }
}

/// Window start positions: every hop, with the last window flush with the end.
fn window_starts(len: usize, win: usize, hop: usize) -> Vec<usize> {
    let mut starts = Vec::new();
    let mut s = 0;
    while s + win < len {
        starts.push(s);
        s += hop;
    }
    starts.push(len - win);
    starts
}

/// Segments the input into overlapping windows, runs `run` on each (seeded
/// by window index) and recombines them with raised-cosine weights
/// normalized to sum to one at every sample. Inputs no longer than one
/// window get a single pass.
pub fn run_windowed<F>(run: F, input: &StageInput, cfg: &SlidingWindowConfig) -> Result<Waveform>
where
    F: Fn(&StageInput) -> Result<Waveform> + Sync,
{
    cfg.validate()?;
    if input.signals.is_empty() {
        return Err(PipelineError::Empty);
    }
    let len = input.signals.len();
    let (win, hop) = cfg.frame(input.signals.sample_rate());
    if len <= win {
        return run(input);
    }
    let starts = window_starts(len, win, hop);
    let outputs: Vec<Waveform> = starts
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            let seg = StageInput {
                signals: input.signals.map(|w| w.with_samples(w.samples()[s..s + win].to_vec())),
                seed: derive_seed(input.seed, format!("window{i}").as_bytes()),
            };
            run(&seg)
        })
        .collect::<Result<_>>()?;

    let taper: Vec<f64> = (0..win)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (n as f64 + 0.5) / win as f64).cos())
        .collect();
    let mut acc = vec![0.0f64; len];
    let mut norm = vec![0.0f64; len];
    let last = starts.len() - 1;
    for (i, (&s, y)) in starts.iter().zip(&outputs).enumerate() {
        for (n, &v) in y.samples().iter().enumerate() {
            let flat = (i == 0 && n < win / 2) || (i == last && n >= win / 2);
            let g = if flat { 1.0 } else { taper[n] };
            acc[s + n] += g * v as f64;
            norm[s + n] += g;
        }
    }
    let out: Vec<f64> = acc.iter().zip(&norm).map(|(a, n)| a / n).collect();
    Ok(input.signals.primary().with_f64(&out))
}

/// Unweighted sample-wise mean of `outputs`.
pub fn blend(outputs: &[&Waveform]) -> Result<Waveform> {
    let first = outputs.first().ok_or(PipelineError::Empty)?;
    for w in outputs {
        if w.sample_rate() != first.sample_rate() {
            return Err(PipelineError::RateMismatch(first.sample_rate(), w.sample_rate()));
        }
        if w.len() != first.len() {
            return Err(PipelineError::LengthMismatch {
                expected: first.len(),
                actual: w.len(),
            });
        }
    }
    let n = outputs.len() as f64;
    let out: Vec<f64> = (0..first.len())
        .map(|t| outputs.iter().map(|w| w.samples()[t] as f64).sum::<f64>() / n)
        .collect();
    Ok(first.with_f64(&out))
}

/// Convenience for callers holding a single waveform.
pub fn single_input(w: &Waveform, seed: u64) -> StageInput {
    StageInput {
        signals: StageSignals::Single(w.clone()),
        seed,
    }
}
