use super::matrix::Matrix;
use crate::error::{Error, Result};

const P_MIN: f64 = 1e-12;

/// Mean categorical cross-entropy of softmax outputs, with the fused
/// softmax + CE gradient at the logits, `(p - y) / batch`.
pub fn categorical_crossentropy(probs: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    if probs.shape() != targets.shape() {
        return Err(Error::shape(
            "categorical_crossentropy",
            format!("{:?}", probs.shape()),
            format!("{:?}", targets.shape()),
        ));
    }
    let batch = probs.rows();
    if batch == 0 {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let mut total = 0.0;
    for r in 0..batch {
        let y = targets.row(r);
        let hot = y.iter().filter(|&&v| v == 1.0).count();
        let cold = y.iter().filter(|&&v| v == 0.0).count();
        if hot != 1 || hot + cold != y.len() {
            return Err(Error::InvalidArgument(format!("target row {r} is not one-hot")));
        }
        let p = probs.row(r);
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "probability row {r} sums to {sum}, not 1"
            )));
        }
        let true_class = y.iter().position(|&v| v == 1.0).expect("checked one-hot");
        total -= p[true_class].clamp(P_MIN, 1.0).ln();
    }
    let scale = 1.0 / batch as f64;
    let mut grad = probs.clone();
    for (g, y) in grad.data_mut().iter_mut().zip(targets.data()) {
        *g = (*g - y) * scale;
    }
    Ok((total * scale, grad))
}

/// Mean binary cross-entropy of sigmoid outputs and the fused logit gradient.
pub fn binary_crossentropy(p: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
    if p.len() != y.len() {
        return Err(Error::shape("binary_crossentropy", p.len(), y.len()));
    }
    if p.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArgument(format!("binary target {bad} not in {{0, 1}}")));
    }
    let n = p.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(p.len());
    for (&pi, &yi) in p.iter().zip(y) {
        let c = pi.clamp(P_MIN, 1.0 - P_MIN);
        total -= yi * c.ln() + (1.0 - yi) * (1.0 - c).ln();
        grad.push((pi - yi) / n);
    }
    Ok((total / n, grad))
}

/// Mean squared error and its gradient `2 (pred - target) / batch`.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(Error::shape("mse_loss", pred.len(), target.len()));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let n = pred.len() as f64;
    let mut total = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.iter().zip(target) {
        let d = p - t;
        total += d * d;
        grad.push(2.0 * d / n);
    }
    Ok((total / n, grad))
}
