use ndarray::ArrayD;

use super::{MetricError, Result};

/// `1 − cos(a, b)`, in `[0, 2]`.
pub fn cosine_embedding_loss(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MetricError::ShapeMismatch(format!(
            "embedding dims {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    let cos = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb);
    Ok((1.0 - cos).clamp(0.0, 2.0))
}

/// Mean over layers of the mean absolute difference between paired
/// feature tensors.
pub fn feature_matching_loss(a: &[ArrayD<f64>], b: &[ArrayD<f64>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(MetricError::ShapeMismatch(format!(
            "{} layers vs {} layers",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(MetricError::ShapeMismatch("no feature layers".into()));
    }
    let mut total = 0.0;
    for (i, (fa, fb)) in a.iter().zip(b).enumerate() {
        if fa.shape() != fb.shape() {
            return Err(MetricError::ShapeMismatch(format!(
                "layer {i}: {:?} vs {:?}",
                fa.shape(),
                fb.shape()
            )));
        }
        if fa.is_empty() {
            return Err(MetricError::ShapeMismatch(format!("layer {i} is empty")));
        }
        let sum: f64 = fa.iter().zip(fb.iter()).map(|(x, y)| (x - y).abs()).sum();
        total += sum / fa.len() as f64;
    }
    Ok(total / a.len() as f64)
}
