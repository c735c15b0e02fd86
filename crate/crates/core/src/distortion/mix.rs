use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DistortionError, Result};
use crate::audio::Waveform;
use crate::dsp::{convolve_samples, ConvMode};

/// Frames whose RMS exceeds this level (dBFS) count as active.
pub const ACTIVITY_GATE_DBFS: f64 = -50.0;
pub const ACTIVITY_FRAME_MS: f64 = 20.0;
/// Mixtures are scaled down so their peak does not exceed this value.
pub const PEAK_LIMIT: f64 = 0.99;

/// Per-sample activity flags: a sample is active when its 20 ms frame has
/// RMS above −50 dBFS. Falls back to all-active when no frame qualifies.
pub fn activity_mask(speech: &[f64], sample_rate: u32) -> Vec<bool> {
    let frame = ((ACTIVITY_FRAME_MS / 1000.0 * sample_rate as f64).round() as usize).max(1);
    let gate = 10f64.powf(ACTIVITY_GATE_DBFS / 10.0);
    let mut mask = vec![false; speech.len()];
    let mut any = false;
    for (chunk, m) in speech.chunks(frame).zip(mask.chunks_mut(frame)) {
        let p = chunk.iter().map(|v| v * v).sum::<f64>() / chunk.len() as f64;
        if p > gate {
            m.iter_mut().for_each(|v| *v = true);
            any = true;
        }
    }
    if !any {
        mask.iter_mut().for_each(|v| *v = true);
    }
    mask
}

pub fn masked_power(x: &[f64], mask: &[bool]) -> f64 {
    let (sum, n) = x
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// SNR in dB of `speech` against `noise`, both measured over the frames
/// where the speech is active.
pub fn active_snr_db(speech: &[f64], noise: &[f64], sample_rate: u32) -> f64 {
    let mask = activity_mask(speech, sample_rate);
    10.0 * (masked_power(speech, &mask) / masked_power(noise, &mask)).log10()
}

/// Output of [`mix_at_snr`]. `gain` is the peak-normalization factor applied
/// to both the mixture and the scaled noise (1.0 when no limiting happened);
/// the clean target matching the mixture is `speech · gain`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub mixture: Waveform,
    pub scaled_noise: Waveform,
    pub gain: f64,
}

/// Crops `noise` to the speech length at a seeded offset (tiling when the
/// noise is shorter).
pub(crate) fn crop_noise(noise: &[f64], len: usize, seed: u64) -> Vec<f64> {
    if noise.len() >= len {
        let offset = ChaCha8Rng::seed_from_u64(seed).gen_range(0..=noise.len() - len);
        noise[offset..offset + len].to_vec()
    } else {
        noise.iter().copied().cycle().take(len).collect()
    }
}

/// Mixes speech and noise at `snr_db` (active-speech power ratio), then
/// limits the mixture peak to 0.99.
pub fn mix_at_snr(speech: &Waveform, noise: &Waveform, snr_db: f64, seed: u64) -> Result<Mixture> {
    if speech.sample_rate() != noise.sample_rate() {
        return Err(DistortionError::RateMismatch(speech.sample_rate(), noise.sample_rate()));
    }
    if noise.is_empty() || noise.samples().iter().all(|&v| v == 0.0) {
        return Err(DistortionError::ZeroNoise);
    }
    let s = speech.to_f64();
    let n = crop_noise(&noise.to_f64(), s.len(), seed);
    let mask = activity_mask(&s, speech.sample_rate());
    let ps = masked_power(&s, &mask);
    let mut pn = masked_power(&n, &mask);
    if pn == 0.0 {
        pn = n.iter().map(|v| v * v).sum::<f64>() / n.len().max(1) as f64;
    }
    if pn == 0.0 {
        return Err(DistortionError::ZeroNoise);
    }
    let k = if ps > 0.0 {
        (ps / (pn * 10f64.powf(snr_db / 10.0))).sqrt()
    } else {
        log::warn!("silent speech: noise left at its original level");
        1.0
    };
    let scaled: Vec<f64> = n.iter().map(|v| v * k).collect();
    let mut mixture: Vec<f64> = s.iter().zip(&scaled).map(|(a, b)| a + b).collect();
    let peak = mixture.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > PEAK_LIMIT { PEAK_LIMIT / peak } else { 1.0 };
    let scaled: Vec<f64> = if gain != 1.0 {
        mixture.iter_mut().for_each(|v| *v *= gain);
        scaled.iter().map(|v| v * gain).collect()
    } else {
        scaled
    };
    Ok(Mixture {
        mixture: speech.with_f64(&mixture),
        scaled_noise: speech.with_f64(&scaled),
        gain,
    })
}

/// Reverberates `speech` with `rir`, realigned so the RIR's strongest tap
/// lands on lag 0 and renormalized to the input RMS.
pub fn apply_rir(speech: &Waveform, rir: &Waveform) -> Result<Waveform> {
    if speech.sample_rate() != rir.sample_rate() {
        return Err(DistortionError::RateMismatch(speech.sample_rate(), rir.sample_rate()));
    }
    if rir.is_empty() {
        return Err(DistortionError::InvalidParameter("empty room impulse response".into()));
    }
    if speech.is_empty() {
        return Ok(speech.clone());
    }
    let h = rir.to_f64();
    let peak_tap = h
        .iter()
        .enumerate()
        .fold((0, 0.0f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) })
        .0;
    let x = speech.to_f64();
    let full = convolve_samples(&x, &h, ConvMode::Full);
    let mut out = full[peak_tap..peak_tap + x.len()].to_vec();
    let rms = |v: &[f64]| (v.iter().map(|s| s * s).sum::<f64>() / v.len() as f64).sqrt();
    let (rin, rout) = (rms(&x), rms(&out));
    if rout > 0.0 {
        out.iter_mut().for_each(|v| *v *= rin / rout);
    }
    Ok(speech.with_f64(&out))
}
