use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::Waveform;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvMode {
    /// `len(x) + len(h) - 1` samples
    Full,
    /// `len(x)` samples, centered on the kernel midpoint
    Same,
}

/// Linear convolution by FFT overlap-save.
pub fn convolve_samples(x: &[f64], h: &[f64], mode: ConvMode) -> Vec<f64> {
    assert!(!h.is_empty(), "empty convolution kernel");
    if x.is_empty() {
        return Vec::new();
    }
    let m = h.len();
    let full_len = x.len() + m - 1;
    let full = if m == 1 {
        x.iter().map(|v| v * h[0]).collect()
    } else {
        overlap_save(x, h, full_len)
    };
    match mode {
        ConvMode::Full => full,
        ConvMode::Same => {
            let start = (m - 1) / 2;
            full[start..start + x.len()].to_vec()
        }
    }
}

fn overlap_save(x: &[f64], h: &[f64], full_len: usize) -> Vec<f64> {
    let m = h.len();
    let block = (4 * m).next_power_of_two().max(1024);
    let step = block - (m - 1);
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(block);
    let inv = planner.plan_fft_inverse(block);

    let mut kernel: Vec<Complex64> = h.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    kernel.resize(block, Complex64::new(0.0, 0.0));
    fwd.process(&mut kernel);

    let sample = |i: i64| -> f64 {
        if i >= 0 && (i as usize) < x.len() {
            x[i as usize]
        } else {
            0.0
        }
    };
    let scale = 1.0 / block as f64;
    let mut out = Vec::with_capacity(full_len);
    let mut buf = vec![Complex64::new(0.0, 0.0); block];
    let mut pos = 0usize;
    while pos < full_len {
        // input segment starts m-1 samples before the output position
        let seg_start = pos as i64 - (m as i64 - 1);
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(sample(seg_start + k as i64), 0.0);
        }
        fwd.process(&mut buf);
        buf.iter_mut().zip(&kernel).for_each(|(b, k)| *b *= k);
        inv.process(&mut buf);
        let take = step.min(full_len - pos);
        out.extend(buf[m - 1..m - 1 + take].iter().map(|c| c.re * scale));
        pos += take;
    }
    out
}

pub fn convolve(w: &Waveform, kernel: &[f64], mode: ConvMode) -> Waveform {
    w.with_f64(&convolve_samples(&w.to_f64(), kernel, mode))
}
