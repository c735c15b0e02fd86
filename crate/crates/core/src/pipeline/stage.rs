use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::audio::{resample, Waveform};

/// Number of samples by which fusion inputs may disagree before assembly
/// fails (one hop of the default STFT grid).
pub const FUSION_LENGTH_TOLERANCE: usize = 1024;

/// How much of the signal a stage needs to see at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceptiveContext {
    /// Processed in overlapping windows.
    Chunked,
    FullSignal,
}

/// The validated `(noisy, s1, s2)` triple consumed by a fusion stage.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionInput {
    noisy: Waveform,
    s1: Waveform,
    s2: Waveform,
}

impl FusionInput {
    pub fn noisy(&self) -> &Waveform {
        &self.noisy
    }
    pub fn s1(&self) -> &Waveform {
        &self.s1
    }
    pub fn s2(&self) -> &Waveform {
        &self.s2
    }
}

/// Checks rates and lengths of a fusion triple. Lengths that differ by at
/// most [`FUSION_LENGTH_TOLERANCE`] samples are trimmed to the shortest.
pub fn assemble_fusion_input(noisy: &Waveform, s1: &Waveform, s2: &Waveform) -> Result<FusionInput> {
    let sr = noisy.sample_rate();
    for w in [s1, s2] {
        if w.sample_rate() != sr {
            return Err(PipelineError::RateMismatch(sr, w.sample_rate()));
        }
    }
    let lens = [noisy.len(), s1.len(), s2.len()];
    let (min, max) = (*lens.iter().min().unwrap(), *lens.iter().max().unwrap());
    if max - min > FUSION_LENGTH_TOLERANCE {
        return Err(PipelineError::LengthMismatch { expected: min, actual: max });
    }
    if max != min {
        log::warn!("fusion inputs differ in length ({lens:?}); trimming to {min}");
    }
    Ok(FusionInput {
        noisy: noisy.fit_to_len(min),
        s1: s1.fit_to_len(min),
        s2: s2.fit_to_len(min),
    })
}

/// Signals handed to a stage.
#[derive(Debug, Clone, PartialEq)]
pub enum StageSignals {
    Single(Waveform),
    /// Token-stage input: the noisy mixture plus the first estimate.
    Conditioned { noisy: Waveform, s1: Waveform },
    Fusion(FusionInput),
}

impl StageSignals {
    /// Most refined signal in the bundle; plain enhancers act on this.
    pub fn primary(&self) -> &Waveform {
        match self {
            Self::Single(w) => w,
            Self::Conditioned { s1, .. } => s1,
            Self::Fusion(f) => &f.s2,
        }
    }

    pub fn len(&self) -> usize {
        self.primary().len()
    }

    pub fn is_empty(&self) -> bool {
        self.primary().is_empty()
    }

    pub fn sample_rate(&self) -> u32 {
        self.primary().sample_rate()
    }

    /// Applies `f` to every signal in the bundle.
    pub fn map(&self, f: impl Fn(&Waveform) -> Waveform) -> Self {
        match self {
            Self::Single(w) => Self::Single(f(w)),
            Self::Conditioned { noisy, s1 } => Self::Conditioned {
                noisy: f(noisy),
                s1: f(s1),
            },
            Self::Fusion(x) => Self::Fusion(FusionInput {
                noisy: f(&x.noisy),
                s1: f(&x.s1),
                s2: f(&x.s2),
            }),
        }
    }
}

/// A stage invocation: signals plus the seed for any randomness the stage
/// uses. Seeds differ per shift offset and per window.
#[derive(Debug, Clone, PartialEq)]
pub struct StageInput {
    pub signals: StageSignals,
    pub seed: u64,
}

/// One enhancement stage. Implementations must return a waveform with the
/// length and rate of `input.signals.primary()` and be callable from
/// several threads at once.
pub trait Stage: Send + Sync {
    fn name(&self) -> &str;

    /// Rate the stage operates at; inputs are resampled when it differs.
    fn expected_rate(&self) -> Option<u32> {
        None
    }

    fn context(&self) -> ReceptiveContext {
        ReceptiveContext::FullSignal
    }

    fn enhance(&self, input: &StageInput) -> Result<Waveform>;
}

/// Runs `stage` at its expected rate and enforces the length/rate contract.
pub fn invoke(stage: &dyn Stage, input: &StageInput) -> Result<Waveform> {
    let rate = input.signals.sample_rate();
    let len = input.signals.len();
    let out = match stage.expected_rate() {
        Some(r) if r != rate => {
            let converted = StageInput {
                signals: input.signals.map(|w| resample(w, r)),
                seed: input.seed,
            };
            let y = stage.enhance(&converted)?;
            resample(&y, rate).fit_to_len(len)
        }
        _ => stage.enhance(input)?,
    };
    if out.len() != len || out.sample_rate() != rate {
        return Err(PipelineError::StageContract {
            stage: stage.name().to_string(),
            reason: format!(
                "returned {} samples at {} Hz for {} samples at {} Hz",
                out.len(),
                out.sample_rate(),
                len,
                rate
            ),
        });
    }
    Ok(out)
}

/// Passes the primary signal through unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityStage;

impl Stage for IdentityStage {
    fn name(&self) -> &str {
        "identity"
    }
    fn context(&self) -> ReceptiveContext {
        ReceptiveContext::Chunked
    }
    fn enhance(&self, input: &StageInput) -> Result<Waveform> {
        Ok(input.signals.primary().clone())
    }
}

/// Memoryless gain.
#[derive(Debug, Clone, Copy)]
pub struct GainStage(pub f64);

impl Stage for GainStage {
    fn name(&self) -> &str {
        "gain"
    }
    fn context(&self) -> ReceptiveContext {
        ReceptiveContext::Chunked
    }
    fn enhance(&self, input: &StageInput) -> Result<Waveform> {
        Ok(input.signals.primary().scaled(self.0))
    }
}

/// Identity plus white Gaussian noise of standard deviation `sigma`, drawn
/// fresh from the invocation seed.
#[derive(Debug, Clone, Copy)]
pub struct NoisyIdentityStage {
    pub sigma: f64,
}

impl Stage for NoisyIdentityStage {
    fn name(&self) -> &str {
        "noisy_identity"
    }
    fn enhance(&self, input: &StageInput) -> Result<Waveform> {
        let x = input.signals.primary();
        let normal = Normal::new(0.0, self.sigma)
            .map_err(|e| PipelineError::InvalidConfig(format!("noise sigma: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(input.seed);
        let y: Vec<f64> = x.samples().iter().map(|&s| s as f64 + normal.sample(&mut rng)).collect();
        Ok(Waveform::from_f64(&y, x.sample_rate())?)
    }
}

/// Fusion stand-in: a fixed weighted mix of `(noisy, s1, s2)` enhanced by
/// an inner stage.
pub struct FusionStage {
    pub weights: [f64; 3],
    pub inner: Box<dyn Stage>,
}

impl FusionStage {
    pub fn new(weights: [f64; 3], inner: Box<dyn Stage>) -> Self {
        Self { weights, inner }
    }
}

impl Stage for FusionStage {
    fn name(&self) -> &str {
        "fusion"
    }
    fn expected_rate(&self) -> Option<u32> {
        self.inner.expected_rate()
    }
    fn context(&self) -> ReceptiveContext {
        self.inner.context()
    }
    fn enhance(&self, input: &StageInput) -> Result<Waveform> {
        let mixed = match &input.signals {
            StageSignals::Fusion(f) => {
                let [a, b, c] = self.weights;
                let mix: Vec<f64> = f
                    .noisy
                    .samples()
                    .iter()
                    .zip(f.s1.samples())
                    .zip(f.s2.samples())
                    .map(|((&x, &y), &z)| a * x as f64 + b * y as f64 + c * z as f64)
                    .collect();
                Waveform::from_f64(&mix, f.noisy.sample_rate())?
            }
            other => other.primary().clone(),
        };
        self.inner.enhance(&StageInput {
            signals: StageSignals::Single(mixed),
            seed: input.seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize, sr: u32) -> Waveform {
        Waveform::from_f64(&(0..n).map(|i| i as f64 / n as f64).collect::<Vec<_>>(), sr).unwrap()
    }

    #[test]
    fn fusion_assembly_order_and_trim() {
        let x = ramp(1000, 16000);
        let a = x.scaled(0.5);
        let b = ramp(1003, 16000);
        let f = assemble_fusion_input(&x, &a, &b).unwrap();
        assert_eq!(f.noisy(), &x);
        assert_eq!(f.s1(), &a);
        assert_eq!(f.s2().len(), 1000);
        let far = ramp(1000 + FUSION_LENGTH_TOLERANCE + 1, 16000);
        assert!(matches!(
            assemble_fusion_input(&x, &a, &far),
            Err(PipelineError::LengthMismatch { .. })
        ));
        let other = ramp(1000, 44100);
        assert!(matches!(
            assemble_fusion_input(&ramp(1000, 48000), &other, &other),
            Err(PipelineError::RateMismatch(48000, 44100))
        ));
    }

    struct Truncating;
    impl Stage for Truncating {
        fn name(&self) -> &str {
            "truncating"
        }
        fn enhance(&self, input: &StageInput) -> Result<Waveform> {
            Ok(input.signals.primary().fit_to_len(input.signals.len() - 1))
        }
    }

    #[test]
    fn contract_violation_is_reported() {
        let input = StageInput {
            signals: StageSignals::Single(ramp(100, 16000)),
            seed: 0,
        };
        assert!(matches!(invoke(&Truncating, &input), Err(PipelineError::StageContract { .. })));
    }

    struct At8k;
    impl Stage for At8k {
        fn name(&self) -> &str {
            "at8k"
        }
        fn expected_rate(&self) -> Option<u32> {
            Some(8000)
        }
        fn enhance(&self, input: &StageInput) -> Result<Waveform> {
            assert_eq!(input.signals.sample_rate(), 8000);
            Ok(input.signals.primary().clone())
        }
    }

    #[test]
    fn invoke_resamples_to_stage_rate() {
        let input = StageInput {
            signals: StageSignals::Single(ramp(1601, 16000)),
            seed: 0,
        };
        let y = invoke(&At8k, &input).unwrap();
        assert_eq!(y.len(), 1601);
        assert_eq!(y.sample_rate(), 16000);
    }

    #[test]
    fn fusion_stage_weights() {
        let x = ramp(64, 16000);
        let f = assemble_fusion_input(&x, &x.scaled(2.0), &x.scaled(4.0)).unwrap();
        let stage = FusionStage::new([0.5, 0.25, 0.125], Box::new(IdentityStage));
        let y = stage
            .enhance(&StageInput {
                signals: StageSignals::Fusion(f),
                seed: 0,
            })
            .unwrap();
        for (a, b) in x.samples().iter().zip(y.samples()) {
            assert!((1.5 * a - b).abs() < 1e-6);
        }
    }
}
