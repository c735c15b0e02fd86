use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::{check_pair, MetricError, Result};
use crate::audio::Waveform;
use crate::dsp::{MelFilterbank, StftConfig, StftPlan};

pub const LSD_EPS: f64 = 1e-10;
pub const MCD_EPS: f64 = 1e-10;
pub const MCD_MELS: usize = 80;
/// cepstral coefficients c₁..c₁₃ (c₀ excluded)
pub const MCD_COEFFS: usize = 13;
const LSD_FFT: usize = 2048;
const LSD_HOP: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MelScale {
    pub fft_size: usize,
    pub hop: usize,
    pub n_mels: usize,
}

/// Multi-scale mel-spectrogram distance configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiScaleMelConfig {
    pub scales: Vec<MelScale>,
    pub log_floor: f64,
    pub weight_l1_log: f64,
    pub weight_l1_lin: f64,
}

impl Default for MultiScaleMelConfig {
    fn default() -> Self {
        let scales = [64, 128, 256, 512, 1024, 2048]
            .into_iter()
            .zip([8, 10, 20, 40, 80, 160])
            .map(|(fft_size, n_mels)| MelScale {
                fft_size,
                hop: fft_size / 4,
                n_mels,
            })
            .collect();
        Self {
            scales,
            log_floor: 1e-5,
            weight_l1_log: 1.0,
            weight_l1_lin: 1.0,
        }
    }
}

impl MultiScaleMelConfig {
    pub fn single(fft_size: usize, hop: usize, n_mels: usize) -> Self {
        Self {
            scales: vec![MelScale {
                fft_size,
                hop,
                n_mels,
            }],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(MetricError::InvalidConfig("no mel scales".into()));
        }
        if !(self.log_floor > 0.0) {
            return Err(MetricError::InvalidConfig("log_floor must be positive".into()));
        }
        for s in &self.scales {
            StftConfig::new(s.fft_size, s.hop)?;
            if s.n_mels == 0 {
                return Err(MetricError::InvalidConfig("n_mels must be positive".into()));
            }
        }
        Ok(())
    }
}

fn magnitudes(plan: &StftPlan, x: &[f64]) -> Array2<f64> {
    plan.forward(x).mapv(|c| c.norm())
}

fn mel_bank(n_mels: usize, rate: u32, fft_size: usize) -> Result<MelFilterbank> {
    let nyquist = rate as f64 / 2.0;
    let usable = MelFilterbank::usable_mels(n_mels, rate, fft_size, 0.0, nyquist);
    if usable == 0 {
        return Err(MetricError::InvalidConfig(format!(
            "no usable mel band at fft_size {fft_size}"
        )));
    }
    Ok(MelFilterbank::new(usable, rate, fft_size, 0.0, nyquist)?)
}

/// Σ over scales of `w_lin·mean|M_r − M_e| + w_log·mean|log10(M_r+floor) − log10(M_e+floor)|`
/// where `M` are mel-filtered STFT magnitudes.
pub fn multiscale_mel_distance(
    reference: &Waveform,
    estimate: &Waveform,
    cfg: &MultiScaleMelConfig,
) -> Result<f64> {
    check_pair(reference, estimate)?;
    cfg.validate()?;
    let r = reference.to_f64();
    let e = estimate.to_f64();
    let rate = reference.sample_rate();
    let mut total = 0.0;
    for scale in &cfg.scales {
        let plan = StftPlan::new(StftConfig::new(scale.fft_size, scale.hop)?)?;
        let bank = mel_bank(scale.n_mels, rate, scale.fft_size)?;
        let mr = bank.apply_frames(magnitudes(&plan, &r).view());
        let me = bank.apply_frames(magnitudes(&plan, &e).view());
        let count = mr.len() as f64;
        let (mut lin, mut log) = (0.0, 0.0);
        for (a, b) in mr.iter().zip(me.iter()) {
            lin += (a - b).abs();
            log += ((a + cfg.log_floor).log10() - (b + cfg.log_floor).log10()).abs();
        }
        total += cfg.weight_l1_lin * lin / count + cfg.weight_l1_log * log / count;
    }
    Ok(total)
}

/// Mean over frames of the RMS (over bins) difference of log power spectra,
/// in dB. STFT 2048/512 Hann.
pub fn log_spectral_distance(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    check_pair(reference, estimate)?;
    let plan = StftPlan::new(StftConfig::new(LSD_FFT, LSD_HOP)?)?;
    let pr = plan.forward(&reference.to_f64()).mapv(|c| c.norm_sqr());
    let pe = plan.forward(&estimate.to_f64()).mapv(|c| c.norm_sqr());
    let bins = pr.ncols() as f64;
    let per_frame: Vec<f64> = pr
        .axis_iter(Axis(0))
        .zip(pe.axis_iter(Axis(0)))
        .map(|(a, b)| {
            let ms: f64 = a
                .iter()
                .zip(b.iter())
                .map(|(x, y)| (10.0 * (x + LSD_EPS).log10() - 10.0 * (y + LSD_EPS).log10()).powi(2))
                .sum::<f64>()
                / bins;
            ms.sqrt()
        })
        .collect();
    Ok(per_frame.iter().sum::<f64>() / per_frame.len() as f64)
}

/// Orthonormal DCT-II of `x`, first `n_out` coefficients.
pub(crate) fn dct2(x: &[f64], n_out: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..n_out)
        .map(|k| {
            let s: f64 = x
                .iter()
                .enumerate()
                .map(|(i, v)| v * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n).cos())
                .sum();
            let norm = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            s * norm
        })
        .collect()
}

/// Mel cepstra (c₀..c₁₃) per frame from an 80-band log-amplitude mel spectrum.
fn mel_cepstra(plan: &StftPlan, bank: &MelFilterbank, x: &[f64]) -> Vec<Vec<f64>> {
    let power = plan.forward(x).mapv(|c| c.norm_sqr());
    let mel = bank.apply_frames(power.view());
    mel.axis_iter(Axis(0))
        .map(|row| {
            // natural-log amplitude: ½·ln(power)
            let logs: Vec<f64> = row.iter().map(|p| 0.5 * (p + MCD_EPS).ln()).collect();
            dct2(&logs, MCD_COEFFS + 1)
        })
        .collect()
}

/// Mel-cepstral distortion over index-aligned frames (no DTW), excluding c₀:
/// `(10√2 / ln 10) · mean_t sqrt(Σ_{k=1..13} (c_r − c_e)²)`.
pub fn mel_cepstral_distortion(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    check_pair(reference, estimate)?;
    let rate = reference.sample_rate();
    let plan = StftPlan::new(StftConfig::new(LSD_FFT, LSD_HOP)?)?;
    let bank = mel_bank(MCD_MELS, rate, LSD_FFT)?;
    let cr = mel_cepstra(&plan, &bank, &reference.to_f64());
    let ce = mel_cepstra(&plan, &bank, &estimate.to_f64());
    let k = 10.0 * 2f64.sqrt() / std::f64::consts::LN_10;
    let mean: f64 = cr
        .iter()
        .zip(&ce)
        .map(|(a, b)| {
            a[1..]
                .iter()
                .zip(&b[1..])
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .sum::<f64>()
        / cr.len() as f64;
    Ok(k * mean)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{hz_to_mel, mel_to_hz};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn noise(len: usize, seed: u64, amp: f64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.gen_range(-amp..amp)).collect()
    }

    fn wf(x: &[f64]) -> Waveform {
        Waveform::from_f64(x, 16000).unwrap()
    }

    #[test]
    fn mel_distance_identity_symmetry_positivity() {
        let a = wf(&noise(8000, 1, 0.5));
        let b = wf(&noise(8000, 2, 0.5));
        let cfg = MultiScaleMelConfig::default();
        assert_eq!(multiscale_mel_distance(&a, &a, &cfg).unwrap(), 0.0);
        let ab = multiscale_mel_distance(&a, &b, &cfg).unwrap();
        let ba = multiscale_mel_distance(&b, &a, &cfg).unwrap();
        assert!(ab > 0.0);
        assert_eq!(ab, ba);
    }

    /// Independent oracle: naive DFT, hand-built triangles, explicit loops.
    fn hand_rolled_mel_distance(r: &[f64], e: &[f64], rate: f64, n_fft: usize, hop: usize, n_mels: usize) -> f64 {
        let bins = n_fft / 2 + 1;
        let window: Vec<f64> = (0..n_fft).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n_fft as f64).cos()).collect();
        let reflect = |x: &[f64], i: i64| -> f64 {
            let n = x.len() as i64;
            let mut j = i;
            while j < 0 || j >= n {
                if j < 0 {
                    j = -j;
                }
                if j >= n {
                    j = 2 * (n - 1) - j;
                }
            }
            x[j as usize]
        };
        let mel_hi = hz_to_mel(rate / 2.0);
        let edges: Vec<f64> = (0..n_mels + 2).map(|i| mel_to_hz(mel_hi * i as f64 / (n_mels + 1) as f64)).collect();
        let tri = |m: usize, f: f64| -> f64 {
            let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            if f > lo && f <= c {
                (f - lo) / (c - lo)
            } else if f > c && f < hi {
                (hi - f) / (hi - c)
            } else {
                0.0
            }
        };
        let mel_frames = |x: &[f64]| -> Vec<Vec<f64>> {
            let frames = 1 + x.len() / hop;
            (0..frames)
                .map(|t| {
                    let mags: Vec<f64> = (0..bins)
                        .map(|k| {
                            let (mut re, mut im) = (0.0, 0.0);
                            for n in 0..n_fft {
                                let v = reflect(x, (t * hop + n) as i64 - (n_fft / 2) as i64) * window[n];
                                let ang = -2.0 * PI * (k * n) as f64 / n_fft as f64;
                                re += v * ang.cos();
                                im += v * ang.sin();
                            }
                            (re * re + im * im).sqrt()
                        })
                        .collect();
                    (0..n_mels)
                        .map(|m| (0..bins).map(|k| tri(m, k as f64 * rate / n_fft as f64) * mags[k]).sum())
                        .collect()
                })
                .collect()
        };
        let (mr, me) = (mel_frames(r), mel_frames(e));
        let mut lin = 0.0;
        let mut log = 0.0;
        let mut count = 0.0;
        for (a, b) in mr.iter().zip(&me) {
            for (x, y) in a.iter().zip(b) {
                lin += (x - y).abs();
                log += ((x + 1e-5).log10() - (y + 1e-5).log10()).abs();
                count += 1.0;
            }
        }
        lin / count + log / count
    }

    #[test]
    fn single_scale_matches_hand_rolled_oracle() {
        // 32 samples at hop 16 → 3 frames
        let r = noise(32, 10, 0.8);
        let e = noise(32, 11, 0.8);
        let cfg = MultiScaleMelConfig::single(64, 16, 8);
        let got = multiscale_mel_distance(&wf(&r), &wf(&e), &cfg).unwrap();
        // oracle consumes the f32-rounded samples the waveform holds
        let rr: Vec<f64> = r.iter().map(|&v| v as f32 as f64).collect();
        let ee: Vec<f64> = e.iter().map(|&v| v as f32 as f64).collect();
        let want = hand_rolled_mel_distance(&rr, &ee, 16000.0, 64, 16, 8);
        assert!((got - want).abs() < 1e-9, "{got} vs {want}");
    }

    #[test]
    fn lsd_properties() {
        let a = wf(&noise(16000, 3, 0.5));
        assert_eq!(log_spectral_distance(&a, &a).unwrap(), 0.0);
        let doubled = a.scaled(2.0);
        let v = log_spectral_distance(&a, &doubled).unwrap();
        assert!((v - 10.0 * 4f64.log10()).abs() < 1e-3, "{v}");
        let b = wf(&noise(16000, 4, 0.5));
        assert_eq!(
            log_spectral_distance(&a, &b).unwrap(),
            log_spectral_distance(&b, &a).unwrap()
        );
    }

    #[test]
    fn mcd_properties() {
        let r = wf(&noise(16000, 5, 0.3));
        assert_eq!(mel_cepstral_distortion(&r, &r).unwrap(), 0.0);
        let tiny: Vec<f64> = r.to_f64().iter().zip(noise(16000, 6, 0.003)).map(|(a, b)| a + b).collect();
        let noisy: Vec<f64> = r
            .to_f64()
            .iter()
            .zip(noise(16000, 6, 0.3))
            .enumerate()
            .map(|(i, (a, b))| a * (1.0 + (i as f64 * 0.001).sin()) + b)
            .collect();
        let m_tiny = mel_cepstral_distortion(&r, &wf(&tiny)).unwrap();
        let m_noisy = mel_cepstral_distortion(&r, &wf(&noisy)).unwrap();
        assert!(m_noisy > m_tiny, "{m_noisy} vs {m_tiny}");
        assert_eq!(
            mel_cepstral_distortion(&r, &wf(&noisy)).unwrap(),
            mel_cepstral_distortion(&wf(&noisy), &r).unwrap()
        );
    }

    #[test]
    fn mcd_ignores_global_gain() {
        // shaped signal so the estimate differs spectrally from the reference
        let r: Vec<f64> = noise(16000, 7, 0.3);
        let e: Vec<f64> = (0..16000).map(|i| 0.2 * (i as f64 * 0.07).sin() + r[i] * 0.5).collect();
        let base = mel_cepstral_distortion(&wf(&r), &wf(&e)).unwrap();
        // gain of 2 is exact in f32, so only c₀ moves
        let g = 2.0;
        let rg: Vec<f64> = r.iter().map(|v| v * g).collect();
        let eg: Vec<f64> = e.iter().map(|v| v * g).collect();
        let scaled = mel_cepstral_distortion(&wf(&rg), &wf(&eg)).unwrap();
        assert!((base - scaled).abs() < 1e-6, "{base} vs {scaled}");
    }

    #[test]
    fn dct_of_constant_is_c0_only() {
        let c = dct2(&[3.0; 80], 14);
        assert!((c[0] - 3.0 * 80f64.sqrt()).abs() < 1e-9);
        assert!(c[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn length_mismatch() {
        let a = wf(&[0.1; 100]);
        let b = wf(&[0.1; 101]);
        assert!(matches!(log_spectral_distance(&a, &b), Err(MetricError::LengthMismatch { .. })));
        assert!(matches!(
            multiscale_mel_distance(&a, &b, &MultiScaleMelConfig::default()),
            Err(MetricError::LengthMismatch { .. })
        ));
    }
}
