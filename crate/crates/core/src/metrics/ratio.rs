use super::{check_pair, MetricError, Result};
use crate::audio::Waveform;

/// Upper bound reported for signal ratios (perfect reconstruction).
pub const CAPPED_DB: f64 = 100.0;
/// Regularizer added to the distortion energy.
pub const RATIO_EPS: f64 = 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn capped_ratio_db(signal: f64, distortion: f64) -> f64 {
    let db = 10.0 * (signal / (distortion + RATIO_EPS)).log10();
    if db.is_nan() {
        CAPPED_DB
    } else {
        db.min(CAPPED_DB)
    }
}

/// Scale-invariant SDR in dB on raw samples.
pub fn si_sdr_samples(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(MetricError::LengthMismatch {
            reference: reference.len(),
            estimate: estimate.len(),
        });
    }
    let ref_energy = dot(reference, reference);
    if ref_energy == 0.0 {
        return Err(MetricError::ZeroReference);
    }
    let alpha = dot(estimate, reference) / ref_energy;
    let target_energy = alpha * alpha * ref_energy;
    let distortion: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(r, e)| (e - alpha * r).powi(2))
        .sum();
    Ok(capped_ratio_db(target_energy, distortion))
}

/// Plain SDR `10·log10(‖ref‖² / ‖est − ref‖²)` in dB on raw samples.
pub fn sdr_samples(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(MetricError::LengthMismatch {
            reference: reference.len(),
            estimate: estimate.len(),
        });
    }
    let ref_energy = dot(reference, reference);
    if ref_energy == 0.0 {
        return Err(MetricError::ZeroReference);
    }
    let distortion: f64 = reference
        .iter()
        .zip(estimate)
        .map(|(r, e)| (e - r).powi(2))
        .sum();
    Ok(capped_ratio_db(ref_energy, distortion))
}

pub fn si_sdr(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    check_pair(reference, estimate)?;
    si_sdr_samples(&reference.to_f64(), &estimate.to_f64())
}

pub fn sdr(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    check_pair(reference, estimate)?;
    sdr_samples(&reference.to_f64(), &estimate.to_f64())
}
