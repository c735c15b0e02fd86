use super::window::{kaiser, sinc};
use super::{DspError, Result};

pub const LOWPASS_KAISER_BETA: f64 = 8.6;

/// Linear-phase windowed-sinc low-pass (Kaiser β = 8.6), normalized to unit
/// DC gain. `taps` must be odd.
pub fn fir_lowpass(cutoff: f64, sample_rate: f64, taps: usize) -> Result<Vec<f64>> {
    if !(cutoff > 0.0 && cutoff < sample_rate / 2.0) {
        return Err(DspError::InvalidCutoff { cutoff, sample_rate });
    }
    if taps % 2 == 0 {
        return Err(DspError::InvalidConfig(format!("tap count {taps} must be odd")));
    }
    let fc = cutoff / sample_rate;
    let mid = (taps / 2) as f64;
    let win = kaiser(taps, LOWPASS_KAISER_BETA);
    let mut h: Vec<f64> = (0..taps)
        .map(|n| 2.0 * fc * sinc(2.0 * fc * (n as f64 - mid)) * win[n])
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|c| *c /= sum);
    // enforce exact symmetry after normalization
    for n in 0..taps / 2 {
        let avg = 0.5 * (h[n] + h[taps - 1 - n]);
        h[n] = avg;
        h[taps - 1 - n] = avg;
    }
    Ok(h)
}

/// Odd tap count giving a transition band no wider than `transition_hz` for
/// the β = 8.6 Kaiser design, with a floor of `min_taps`.
pub fn taps_for_transition(transition_hz: f64, sample_rate: f64, min_taps: usize) -> usize {
    // Kaiser estimate N = (A - 8) / (2.285 Δω) with A ≈ 86 dB for β = 8.6
    let dw = 2.0 * std::f64::consts::PI * transition_hz / sample_rate;
    let n = (78.0 / (2.285 * dw)).ceil() as usize;
    let n = n.max(min_taps);
    n | 1
}

/// Magnitude response at `freq` Hz.
pub fn frequency_response(h: &[f64], freq: f64, sample_rate: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI * freq / sample_rate;
    let (re, im) = h.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &c)| {
        (re + c * (w * n as f64).cos(), im - c * (w * n as f64).sin())
    });
    (re * re + im * im).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dc_gain_and_symmetry() {
        let h = fir_lowpass(4000.0, 16000.0, 255).unwrap();
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-3);
        for n in 0..255 {
            assert_eq!(h[n], h[254 - n]);
        }
    }

    #[test]
    fn stopband_attenuation_255_taps() {
        for &(cut, fs) in &[(4000.0, 16000.0), (3000.0, 44100.0), (8000.0, 48000.0)] {
            let h = fir_lowpass(cut, fs, 255).unwrap();
            // scan the stopband from 1.25·cutoff to Nyquist
            let mut f = 1.25 * cut;
            while f < fs / 2.0 {
                let db = 20.0 * frequency_response(&h, f, fs).log10();
                assert!(db <= -60.0, "cut {cut} fs {fs}: {db} dB at {f} Hz");
                f += 5.0;
            }
        }
    }

    #[test]
    fn invalid_cutoff() {
        assert!(matches!(fir_lowpass(0.0, 16000.0, 31), Err(DspError::InvalidCutoff { .. })));
        assert!(matches!(fir_lowpass(8000.0, 16000.0, 31), Err(DspError::InvalidCutoff { .. })));
        assert!(fir_lowpass(1000.0, 16000.0, 30).is_err());
    }

    #[test]
    fn tap_estimate_is_odd_and_sufficient() {
        let taps = taps_for_transition(200.0, 48000.0, 255);
        assert_eq!(taps % 2, 1);
        let h = fir_lowpass(1000.0, 48000.0, taps).unwrap();
        let db = 20.0 * frequency_response(&h, 1250.0, 48000.0).log10();
        assert!(db <= -60.0, "{db}");
    }
}
