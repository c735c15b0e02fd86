use std::f64::consts::PI;

/// Periodic (DFT-even) Hann window: `0.5 - 0.5 cos(2πn/N)`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Zeroth-order modified Bessel function of the first kind (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= (half / k) * (half / k);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
        k += 1.0;
    }
    sum
}

/// Kaiser taper evaluated at a normalized position `u ∈ [-1, 1]`; zero outside.
pub fn kaiser_at(u: f64, beta: f64) -> f64 {
    if u.abs() > 1.0 {
        return 0.0;
    }
    bessel_i0(beta * (1.0 - u * u).sqrt()) / bessel_i0(beta)
}

/// Symmetric Kaiser window of length `n`.
pub fn kaiser(n: usize, beta: f64) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let m = (n - 1) as f64;
    (0..n)
        .map(|i| kaiser_at(2.0 * i as f64 / m - 1.0, beta))
        .collect()
}

/// Normalized sinc, `sin(πx)/(πx)`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hann_squared_overlap_is_one_point_five() {
        let n = 4096;
        let hop = n / 4;
        let w = hann_periodic(n);
        // sum of w² over the four frames covering each interior sample
        for t in 0..hop {
            let s: f64 = (0..4).map(|k| w[t + k * hop].powi(2)).sum();
            assert!((s - 1.5).abs() < 1e-12, "t={t} s={s}");
        }
    }

    #[test]
    fn bessel_known_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-12);
        assert!((bessel_i0(8.6) - 750.461_159_563_165_9).abs() / 750.46 < 1e-12);
    }

    #[test]
    fn kaiser_symmetric_unit_peak() {
        let w = kaiser(17, 8.6);
        assert!((w[8] - 1.0).abs() < 1e-15);
        for i in 0..17 {
            assert_eq!(w[i], w[16 - i]);
        }
    }
}
