//! Windowed-sinc polyphase resampler.
//!
//! The interpolation kernel is a Kaiser-windowed sinc whose cutoff sits at
//! 0.95 of the lower Nyquist frequency. The kernel spans 64 samples at the
//! lower of the two rates, so upsampling uses 64 input taps per phase and
//! downsampling by `r` uses `64·r`. Rational rate pairs with at most
//! [`MAX_TABLE_PHASES`] phases get a precomputed coefficient table.

use super::Waveform;
use crate::dsp::window::{kaiser_at, sinc};

const TAPS_AT_LOWER_RATE: usize = 64;
const CUTOFF_FRACTION: f64 = 0.95;
const KAISER_BETA: f64 = 9.0;
const MAX_TABLE_PHASES: usize = 4096;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Precomputed resampling plan for one `(source, target)` rate pair.
#[derive(Debug, Clone)]
pub struct Resampler {
    source_rate: u32,
    target_rate: u32,
    /// output step in input samples is `down / up`
    up: u64,
    down: u64,
    /// cutoff in cycles per input sample
    cutoff: f64,
    half_width: f64,
    /// taps are `base - reach + 1 ..= base + reach`
    reach: i64,
    table: Option<Vec<Vec<f64>>>,
}

impl Resampler {
    pub fn new(source_rate: u32, target_rate: u32) -> Self {
        assert!(source_rate > 0 && target_rate > 0, "rates must be positive");
        let g = gcd(source_rate as u64, target_rate as u64);
        let up = target_rate as u64 / g;
        let down = source_rate as u64 / g;
        let lower = source_rate.min(target_rate) as f64;
        let cutoff = CUTOFF_FRACTION * 0.5 * lower / source_rate as f64;
        let ratio = (source_rate as f64 / target_rate as f64).max(1.0);
        let half_width = TAPS_AT_LOWER_RATE as f64 / 2.0 * ratio;
        let reach = half_width.ceil() as i64;
        let mut r = Self {
            source_rate,
            target_rate,
            up,
            down,
            cutoff,
            half_width,
            reach,
            table: None,
        };
        if (up as usize) <= MAX_TABLE_PHASES {
            let table = (0..up)
                .map(|p| r.phase_coefficients(p as f64 / up as f64))
                .collect();
            r.table = Some(table);
        }
        r
    }

    pub fn source_rate(&self) -> u32 {
        self.source_rate
    }

    pub fn target_rate(&self) -> u32 {
        self.target_rate
    }

    /// Coefficients for a fractional input position `frac ∈ [0, 1)`,
    /// normalized to unit DC gain.
    fn phase_coefficients(&self, frac: f64) -> Vec<f64> {
        let mut coeffs: Vec<f64> = (-self.reach + 1..=self.reach)
            .map(|j| {
                let d = frac - j as f64;
                2.0 * self.cutoff
                    * sinc(2.0 * self.cutoff * d)
                    * kaiser_at(d / self.half_width, KAISER_BETA)
            })
            .collect();
        let sum: f64 = coeffs.iter().sum();
        if sum.abs() > 0.0 {
            coeffs.iter_mut().for_each(|c| *c /= sum);
        }
        coeffs
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len as f64 * self.target_rate as f64 / self.source_rate as f64).round() as usize
    }

    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        if self.up == self.down {
            return input.to_vec();
        }
        let out_len = self.output_len(input.len());
        let n_in = input.len() as i64;
        let mut out = Vec::with_capacity(out_len);
        let mut scratch;
        for n in 0..out_len as u64 {
            let pos = n * self.down;
            let base = (pos / self.up) as i64;
            let phase = (pos % self.up) as usize;
            let coeffs: &[f64] = match &self.table {
                Some(t) => &t[phase],
                None => {
                    scratch = self.phase_coefficients(phase as f64 / self.up as f64);
                    &scratch
                }
            };
            let first = base - self.reach + 1;
            let mut acc = 0.0;
            for (k, &c) in coeffs.iter().enumerate() {
                let idx = first + k as i64;
                if idx >= 0 && idx < n_in {
                    acc += c * input[idx as usize];
                }
            }
            out.push(acc);
        }
        out
    }
}

/// Converts `w` to `target_rate`. The output has
/// `round(len · target / source)` samples; equal rates return a copy.
pub fn resample(w: &Waveform, target_rate: u32) -> Waveform {
    assert!(target_rate > 0, "target rate must be positive");
    if w.sample_rate() == target_rate {
        return w.clone();
    }
    let r = Resampler::new(w.sample_rate(), target_rate);
    let out = r.process(&w.to_f64());
    Waveform {
        samples: out.iter().map(|&s| s as f32).collect(),
        sample_rate: target_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rustfft::{num_complex::Complex, FftPlanner};
    use std::f64::consts::PI;

    fn power_spectrum(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let win = crate::dsp::window::hann_periodic(n);
        let mut buf: Vec<Complex<f64>> = x
            .iter()
            .zip(&win)
            .map(|(a, w)| Complex::new(a * w, 0.0))
            .collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        buf[..n / 2 + 1].iter().map(|c| c.norm_sqr()).collect()
    }

    fn sine(freq: f64, rate: u32, len: usize) -> Vec<f64> {
        (0..len)
            .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / rate as f64).sin())
            .collect()
    }

    #[test]
    fn equal_rates_identity() {
        let w = Waveform::new(vec![0.1, -0.2, 0.3], 16000).unwrap();
        assert_eq!(resample(&w, 16000), w);
    }

    #[test]
    fn output_length_rounds() {
        let w = Waveform::zeros(1001, 48000).unwrap();
        assert_eq!(resample(&w, 16000).len(), 334);
        assert_eq!(resample(&w, 44100).len(), 920);
        let w = Waveform::zeros(7, 8000).unwrap();
        assert_eq!(resample(&w, 22050).len(), 19);
    }

    #[test]
    fn sine_48k_to_24k_keeps_frequency_and_level() {
        let x = sine(1000.0, 48000, 48000);
        let w = Waveform::from_f64(&x, 48000).unwrap();
        let y = resample(&w, 24000).to_f64();
        assert_eq!(y.len(), 24000);
        // FFT-peak oracle on a 8192-point interior block
        let block = &y[4000..4000 + 8192];
        let ps = power_spectrum(block);
        let peak = ps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let bin_hz = 24000.0 / 8192.0;
        assert!((peak as f64 * bin_hz - 1000.0).abs() <= bin_hz, "peak bin {peak}");
        // amplitude (ripple) check against the analytic sine on the interior
        let rms = |v: &[f64]| (v.iter().map(|s| s * s).sum::<f64>() / v.len() as f64).sqrt();
        let in_rms = rms(&x[8000..40000]);
        let out_rms = rms(&y[4000..20000]);
        let ripple_db = 20.0 * (out_rms / in_rms).log10();
        assert!(ripple_db.abs() < 0.1, "ripple {ripple_db} dB");
    }

    #[test]
    fn white_noise_round_trip_rejects_band_above_8k() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..96000).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let w = Waveform::from_f64(&x, 48000).unwrap();
        let y = resample(&resample(&w, 16000), 48000).to_f64();
        assert_eq!(y.len(), x.len());
        // band-energy oracle over averaged interior blocks
        let n = 4096;
        let mut acc = vec![0.0; n / 2 + 1];
        for start in (4096..y.len() - 2 * n).step_by(n / 2) {
            for (a, p) in acc.iter_mut().zip(power_spectrum(&y[start..start + n])) {
                *a += p;
            }
        }
        let total: f64 = acc.iter().sum();
        let cut = (8000.0 / (48000.0 / n as f64)) as usize + 1;
        let high: f64 = acc[cut..].iter().sum();
        let db = 10.0 * (high / total).log10();
        assert!(db <= -60.0, "energy above 8 kHz: {db} dB");
    }

    #[test]
    fn sinusoid_frequency_preserved_across_pairs() {
        for &(src, dst, f) in &[(16000u32, 44100u32, 3000.0), (44100, 16000, 2500.0), (22050, 48000, 7000.0)] {
            let x = sine(f, src, src as usize);
            let y = resample(&Waveform::from_f64(&x, src).unwrap(), dst).to_f64();
            let n = 8192;
            let ps = power_spectrum(&y[y.len() / 2 - n / 2..y.len() / 2 + n / 2]);
            let peak = ps
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            let bin = dst as f64 / n as f64;
            assert!((peak as f64 * bin - f).abs() <= bin, "{src}->{dst}: peak {}", peak as f64 * bin);
        }
    }

    #[test]
    fn untabled_rates_match_direct_formula() {
        // 48001 phases forces on-the-fly coefficients
        let r = Resampler::new(44100, 48001);
        assert!(r.table.is_none());
        let x = sine(440.0, 44100, 2000);
        let y = r.process(&x);
        assert_eq!(y.len(), r.output_len(2000));
        assert!(y.iter().all(|v| v.is_finite()));
    }
}
