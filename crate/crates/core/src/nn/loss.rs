use super::pool::softmax_in_place;
use crate::error::{Error, Result};

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let mut p = logits.to_vec();
    softmax_in_place(&mut p);
    p
}

/// `-log softmax(logits)[label]` and its gradient `softmax - onehot`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if logits.len() < 2 {
        return Err(Error::shape("softmax_cross_entropy", "need at least 2 classes"));
    }
    if label >= logits.len() {
        return Err(Error::invalid(format!(
            "label {label} out of range for {} classes",
            logits.len()
        )));
    }
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    let loss = lse - logits[label];
    let mut grad = softmax(logits);
    grad[label] -= 1.0;
    Ok((loss, grad))
}
