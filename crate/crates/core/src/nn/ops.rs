//! Eager tensor functions, for callers that do not need a tape.

use rand::Rng;

use super::tape::softmax_rows;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.matmul(b)
}

/// Row-wise `exp(z/T) / Σ exp(z/T)`, stabilized by subtracting the row maximum.
pub fn softmax_with_temperature(logits: &Tensor, temperature: f64) -> Result<Tensor> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    if !logits.is_matrix() {
        return Err(Error::shape(format!(
            "softmax expects [batch x classes], got {:?}",
            logits.shape()
        )));
    }
    Ok(softmax_rows(logits, temperature))
}

/// Loss value and its gradient with respect to the logits that produced the posteriors.
#[derive(Clone, Debug)]
pub struct CrossEntropy {
    pub loss: f64,
    pub logit_grad: Tensor,
}

/// Mean `−log p(label)` over rows of `posteriors`.
pub fn cross_entropy_loss(posteriors: &Tensor, labels: &[usize]) -> Result<CrossEntropy> {
    if posteriors.rows() != labels.len() || labels.is_empty() {
        return Err(Error::shape(format!(
            "{} posterior rows for {} labels",
            posteriors.rows(),
            labels.len()
        )));
    }
    let classes = posteriors.cols();
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let mut grad = posteriors.clone();
    for (r, &label) in labels.iter().enumerate() {
        if label >= classes {
            return Err(Error::invalid(format!("label {label} outside {classes} classes")));
        }
        loss -= posteriors.get(r, label).ln();
        let row = grad.row_mut(r);
        row[label] -= 1.0;
        row.iter_mut().for_each(|v| *v /= n);
    }
    let loss = loss / n;
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross_entropy_loss"));
    }
    Ok(CrossEntropy { loss, logit_grad: grad })
}

/// Inverted dropout on a plain tensor.
pub fn dropout<R: Rng + ?Sized>(x: &Tensor, rate: f64, training: bool, rng: &mut R) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 / (1.0 - rate);
    let data = x
        .data()
        .iter()
        .map(|&v| if rng.random::<f64>() < rate { 0.0 } else { v * keep })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}
