//! Deterministic test-signal generators: a voiced, syllabic speech-like
//! signal, spectrally tilted noise and exponentially decaying room responses.
//! Used by the test suites and by `urgentkit simulate` fixtures.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use crate::audio::Waveform;

const FORMANTS: [(f64, f64); 3] = [(700.0, 130.0), (1200.0, 180.0), (2600.0, 250.0)];

fn formant_gain(f: f64) -> f64 {
    FORMANTS
        .iter()
        .map(|&(c, bw)| 1.0 / (1.0 + ((f - c) / bw).powi(2)))
        .sum::<f64>()
        + 0.02
}

/// Harmonic speech surrogate: a gliding 100–220 Hz fundamental shaped by
/// three fixed formants, gated into 120–350 ms syllables separated by short
/// pauses, plus a little breath noise. Peak is about 0.5.
pub fn speech_like(sample_rate: u32, duration_s: f64, seed: u64) -> Waveform {
    let sr = sample_rate as f64;
    let len = (duration_s * sr).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nyq = sr / 2.0;

    // syllable envelope
    let mut env = vec![0.0f64; len];
    let mut t = (rng.gen_range(0.02..0.1) * sr) as usize;
    while t < len {
        let dur = (rng.gen_range(0.12..0.35) * sr) as usize;
        let amp = rng.gen_range(0.5..1.0);
        for i in 0..dur.min(len - t) {
            let u = i as f64 / dur as f64;
            env[t + i] = amp * (PI * u).sin().powf(0.7);
        }
        t += dur + (rng.gen_range(0.04..0.2) * sr) as usize;
    }

    let f0_base = rng.gen_range(100.0..160.0);
    let vib_rate = rng.gen_range(2.0..5.0);
    let vib_phase = rng.gen_range(0.0..2.0 * PI);
    let mut phase = 0.0f64;
    let mut out = vec![0.0f64; len];
    for (i, o) in out.iter_mut().enumerate() {
        if env[i] == 0.0 {
            continue;
        }
        let time = i as f64 / sr;
        let f0 = f0_base * (1.0 + 0.25 * (2.0 * PI * vib_rate * time + vib_phase).sin());
        phase = (phase + 2.0 * PI * f0 / sr) % (2.0 * PI * 1e6);
        let mut s = 0.0;
        let mut h = 1;
        while h as f64 * f0 < nyq.min(5000.0) {
            s += formant_gain(h as f64 * f0) * (h as f64 * phase).sin() / (h as f64).sqrt();
            h += 1;
        }
        let breath: f64 = StandardNormal.sample(&mut rng);
        *o = env[i] * (s + 0.02 * breath);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    Waveform::from_f64(&out, sample_rate).expect("finite synthetic speech")
}

/// Gaussian noise with power spectrum ∝ f^(−tilt) (0 = white, 1 = pink,
/// 2 = brown) normalized to RMS 0.1.
pub fn colored_noise(sample_rate: u32, duration_s: f64, tilt: f64, seed: u64) -> Waveform {
    let len = (duration_s * sample_rate as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut out = if tilt == 0.0 || len < 2 {
        white
    } else {
        shape_spectrum(&white, |f| if f == 0.0 { 0.0 } else { f.powf(-tilt / 2.0) })
    };
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.1 / rms);
    }
    Waveform::from_f64(&out, sample_rate).expect("finite synthetic noise")
}

/// Gaussian noise confined to `[0, band_hz)` by zeroing FFT bins, RMS 0.1.
pub fn band_limited_noise(sample_rate: u32, duration_s: f64, band_hz: f64, seed: u64) -> Waveform {
    let len = (duration_s * sample_rate as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    let sr = sample_rate as f64;
    let mut out = shape_spectrum(&white, |f| if f * sr < band_hz { 1.0 } else { 0.0 });
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.1 / rms);
    }
    Waveform::from_f64(&out, sample_rate).expect("finite synthetic noise")
}

/// Multiplies the spectrum by `gain(normalized_freq)` (cycles/sample in
/// `[0, 0.5]`) using a whole-signal FFT.
fn shape_spectrum(x: &[f64], gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let n = x.len();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 / n as f64;
        *b *= gain(f);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Synthetic room response: a direct-path tap after a 1–5 ms delay followed
/// by exponentially decaying Gaussian reverberation with the given RT60.
pub fn room_impulse_response(sample_rate: u32, rt60_s: f64, seed: u64) -> Waveform {
    let sr = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delay = (rng.gen_range(0.001..0.005) * sr) as usize;
    let len = delay + (rt60_s * sr).ceil() as usize + 1;
    // 60 dB amplitude decay over rt60
    let decay = 3.0 * 10f64.ln() / (rt60_s * sr);
    let mut h = vec![0.0f64; len];
    h[delay] = 1.0;
    for (i, v) in h.iter_mut().enumerate().skip(delay + 1) {
        let g: f64 = StandardNormal.sample(&mut rng);
        *v = (0.3 * g).clamp(-0.9, 0.9) * (-decay * (i - delay) as f64).exp();
    }
    Waveform::from_f64(&h, sample_rate).expect("finite synthetic rir")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(speech_like(16000, 1.0, 3), speech_like(16000, 1.0, 3));
        assert_ne!(speech_like(16000, 1.0, 3), speech_like(16000, 1.0, 4));
        assert_eq!(colored_noise(16000, 0.5, 1.0, 2), colored_noise(16000, 0.5, 1.0, 2));
    }

    #[test]
    fn speech_has_pauses_and_unit_scale() {
        let s = speech_like(16000, 3.0, 1);
        assert_eq!(s.len(), 48000);
        assert!((s.peak() - 0.5).abs() < 1e-6);
        let zeros = s.samples().iter().filter(|v| **v == 0.0).count();
        assert!(zeros > 1600, "{zeros}");
    }

    #[test]
    fn band_limited_noise_has_no_energy_above_band() {
        let n = band_limited_noise(16000, 1.0, 4000.0, 5).to_f64();
        let hi = shape_spectrum(&n, |f| if f * 16000.0 >= 4000.0 { 1.0 } else { 0.0 });
        let ratio = hi.iter().map(|v| v * v).sum::<f64>() / n.iter().map(|v| v * v).sum::<f64>();
        assert!(ratio < 1e-12, "{ratio}");
    }

    #[test]
    fn rir_peak_is_direct_path() {
        let h = room_impulse_response(16000, 0.3, 7);
        let peak = h.samples().iter().map(|v| v.abs()).fold(0.0f32, f32::max);
        assert_eq!(peak, 1.0);
    }
}
