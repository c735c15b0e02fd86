use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::mix::mix_at_snr;
use super::{DistortionError, Result};
use crate::audio::Waveform;
use crate::dsp::{convolve_samples, fir_lowpass, reflect_index, taps_for_transition, ConvMode};

/// Minimum low-pass length used by [`bandwidth_limit`].
pub const MIN_LOWPASS_TAPS: usize = 255;
pub const MU_LAW: f64 = 255.0;
pub const PACKET_FADE_MS: f64 = 2.0;
/// Upper band edge of the wind surrogate.
pub const WIND_CUTOFF_HZ: f64 = 400.0;

fn check_cutoff(cutoff_hz: f64, sample_rate: u32) -> Result<()> {
    let nyq = sample_rate as f64 / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyq) {
        return Err(DistortionError::InvalidCutoff { cutoff_hz, sample_rate });
    }
    Ok(())
}

/// Applies a symmetric FIR forward then backward (squared magnitude, zero
/// phase) with odd-symmetric edge extension so offsets survive the edges.
fn filtfilt(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = h.len().min(n.saturating_sub(1)).max(if n == 1 { 0 } else { 1 });
    let (first, last) = (x[0], x[n - 1]);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    for k in (1..=pad).rev() {
        ext.push(2.0 * first - x[reflect_index(k as i64, n)]);
    }
    ext.extend_from_slice(x);
    for k in 1..=pad {
        ext.push(2.0 * last - x[reflect_index((n - 1 + k) as i64, n)]);
    }
    let fwd = convolve_samples(&ext, h, ConvMode::Same);
    let mut rev: Vec<f64> = fwd.into_iter().rev().collect();
    rev = convolve_samples(&rev, h, ConvMode::Same);
    rev.reverse();
    rev[pad..pad + n].to_vec()
}

/// Tap count for a cutoff: transition 0.4·cutoff, narrowed so the stopband
/// edge stays below Nyquist.
fn lowpass_taps(cutoff_hz: f64, sample_rate: f64) -> usize {
    let nyq = sample_rate / 2.0;
    let transition = (0.4 * cutoff_hz).min(1.8 * (nyq - cutoff_hz));
    taps_for_transition(transition, sample_rate, MIN_LOWPASS_TAPS)
}

/// Zero-phase low-pass at `cutoff_hz`, length preserving.
pub fn bandwidth_limit(w: &Waveform, cutoff_hz: f64) -> Result<Waveform> {
    check_cutoff(cutoff_hz, w.sample_rate())?;
    let sr = w.sample_rate() as f64;
    let h = fir_lowpass(cutoff_hz, sr, lowpass_taps(cutoff_hz, sr))?;
    Ok(w.with_f64(&filtfilt(&w.to_f64(), &h)))
}

/// Hard clip at `±threshold_fraction · max|w|`.
pub fn clip(w: &Waveform, threshold_fraction: f64) -> Result<Waveform> {
    if !(threshold_fraction > 0.0 && threshold_fraction <= 1.0) {
        return Err(DistortionError::InvalidParameter(format!(
            "clip threshold {threshold_fraction} outside (0, 1]"
        )));
    }
    let level = (threshold_fraction * w.peak()) as f32;
    if level == 0.0 {
        return Ok(w.clone());
    }
    Ok(w.with_samples(w.samples().iter().map(|s| s.clamp(-level, level)).collect()))
}

/// Lossy codec stand-in: low-pass, µ-law compand, quantize to `2^bits`
/// mid-rise levels, expand.
pub fn codec_surrogate(w: &Waveform, bits: u32, cutoff_hz: f64) -> Result<Waveform> {
    if !(4..=16).contains(&bits) {
        return Err(DistortionError::InvalidParameter(format!("codec bits {bits} outside [4, 16]")));
    }
    let band = bandwidth_limit(w, cutoff_hz)?;
    let levels = (1u64 << bits) as f64;
    let step = 2.0 / levels;
    let ln_mu = MU_LAW.ln_1p();
    let out: Vec<f64> = band
        .to_f64()
        .iter()
        .map(|&x| {
            let x = x.clamp(-1.0, 1.0);
            let y = x.signum() * (MU_LAW * x.abs()).ln_1p() / ln_mu;
            let idx = ((y + 1.0) / step).floor().clamp(0.0, levels - 1.0);
            let q = -1.0 + (idx + 0.5) * step;
            q.signum() * ((q.abs() * ln_mu).exp() - 1.0) / MU_LAW
        })
        .collect();
    Ok(w.with_f64(&out))
}

/// Result of [`packet_loss_with_mask`]: the degraded signal and one flag per
/// frame telling whether it was dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketLoss {
    pub output: Waveform,
    pub dropped: Vec<bool>,
    pub frame_len: usize,
}

/// Zeroes `burst_ms` frames independently with probability `rate`, with
/// 2 ms linear fades into and out of each gap.
pub fn packet_loss(w: &Waveform, rate: f64, burst_ms: f64, seed: u64) -> Result<Waveform> {
    packet_loss_with_mask(w, rate, burst_ms, seed).map(|p| p.output)
}

pub fn packet_loss_with_mask(w: &Waveform, rate: f64, burst_ms: f64, seed: u64) -> Result<PacketLoss> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(DistortionError::InvalidParameter(format!("loss rate {rate} outside [0, 1]")));
    }
    if !(burst_ms > 0.0) {
        return Err(DistortionError::InvalidParameter(format!("burst length {burst_ms} ms must be positive")));
    }
    let sr = w.sample_rate() as f64;
    let frame_len = ((burst_ms * sr / 1000.0).round() as usize).max(1);
    let n_frames = w.len().div_ceil(frame_len);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dropped: Vec<bool> = (0..n_frames).map(|_| rng.gen::<f64>() < rate).collect();
    if !dropped.iter().any(|&d| d) {
        return Ok(PacketLoss {
            output: w.clone(),
            dropped,
            frame_len,
        });
    }

    let fade = (PACKET_FADE_MS * sr / 1000.0).round().max(1.0);
    let n = w.len();
    // distance from each sample to the nearest dropped sample
    let is_dropped = |i: usize| dropped[i / frame_len];
    let mut dist = vec![f64::INFINITY; n];
    let mut last: Option<usize> = None;
    for (i, d) in dist.iter_mut().enumerate() {
        if is_dropped(i) {
            last = Some(i);
        }
        if let Some(l) = last {
            *d = (i - l) as f64;
        }
    }
    last = None;
    for i in (0..n).rev() {
        if is_dropped(i) {
            last = Some(i);
        }
        if let Some(l) = last {
            dist[i] = dist[i].min((l - i) as f64);
        }
    }
    let out: Vec<f32> = w
        .samples()
        .iter()
        .zip(&dist)
        .map(|(&s, &d)| if d == 0.0 { 0.0 } else { s * (d / fade).min(1.0) as f32 })
        .collect();
    Ok(PacketLoss {
        output: w.with_samples(out),
        dropped,
        frame_len,
    })
}

/// Low-frequency gusty noise: leaky-integrated Gaussian noise, low-passed at
/// 400 Hz, modulated by a smooth log-normal envelope whose knots are spaced
/// `1/gust_rate_hz` seconds apart. Normalized to unit RMS.
pub fn wind_noise(len: usize, sample_rate: u32, gust_rate_hz: f64, seed: u64) -> Result<Waveform> {
    if !(gust_rate_hz > 0.0) {
        return Err(DistortionError::InvalidParameter(format!("gust rate {gust_rate_hz} Hz must be positive")));
    }
    check_cutoff(WIND_CUTOFF_HZ, sample_rate)?;
    let sr = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // leaky integrator, ~20 Hz corner
    let leak = (-2.0 * std::f64::consts::PI * 20.0 / sr).exp();
    let mut acc = 0.0f64;
    let brown: Vec<f64> = (0..len)
        .map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            acc = leak * acc + g;
            acc
        })
        .collect();
    let h = fir_lowpass(WIND_CUTOFF_HZ, sr, lowpass_taps(WIND_CUTOFF_HZ, sr))?;
    let low = filtfilt(&brown, &h);

    let spacing = sr / gust_rate_hz;
    let n_knots = (len as f64 / spacing).ceil() as usize + 2;
    let knots: Vec<f64> = (0..n_knots).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut out: Vec<f64> = low
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let pos = i as f64 / spacing;
            let k = pos.floor() as usize;
            let frac = pos - k as f64;
            let mix = 0.5 - 0.5 * (std::f64::consts::PI * frac).cos();
            let z = knots[k] * (1.0 - mix) + knots[k + 1] * mix;
            v * (0.75 * z).exp()
        })
        .collect();
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / len.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v /= rms);
    }
    Ok(Waveform::from_f64(&out, sample_rate)?)
}

/// Adds [`wind_noise`] to `w` at `snr_db` via [`mix_at_snr`].
pub fn wind_noise_surrogate(w: &Waveform, snr_db: f64, gust_rate_hz: f64, seed: u64) -> Result<Waveform> {
    let wind = wind_noise(w.len(), w.sample_rate(), gust_rate_hz, seed)?;
    Ok(mix_at_snr(w, &wind, snr_db, seed)?.mixture)
}
