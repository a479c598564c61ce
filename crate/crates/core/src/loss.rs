//! Softmax-family losses and their gradients with respect to logits.
//!
//! All losses here are pointwise (one sample); batching and the 1/B mean
//! live in the backward pass, which keeps every gradient formula in this
//! file independently checkable against finite differences.

use crate::error::{Error, Result};

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln() + m;
    logits.iter().map(|z| z - lse).collect()
}

/// Cross-entropy against a hard label. Returns `(loss, dloss/dlogits)`.
pub fn cross_entropy_hard(logits: &[f64], class: usize) -> Result<(f64, Vec<f64>)> {
    if class >= logits.len() {
        return Err(Error::validation(format!(
            "class {class} out of range for {} logits",
            logits.len()
        )));
    }
    let ls = log_softmax(logits);
    let loss = -ls[class];
    let mut grad: Vec<f64> = ls.iter().map(|l| l.exp()).collect();
    grad[class] -= 1.0;
    Ok((loss, grad))
}

/// Cross-entropy against a probability vector (soft label).
/// Returns `(loss, dloss/dlogits)` where the gradient is `softmax(z) - t`.
pub fn cross_entropy_soft(logits: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if logits.len() != target.len() {
        return Err(Error::shape(format!(
            "{} logits vs {} target probabilities",
            logits.len(),
            target.len()
        )));
    }
    let ls = log_softmax(logits);
    let loss = -ls.iter().zip(target).map(|(l, t)| t * l).sum::<f64>();
    let grad: Vec<f64> = ls.iter().zip(target).map(|(l, t)| l.exp() - t).collect();
    Ok((loss, grad))
}

/// Shannon entropy of a probability vector, with the `0·ln 0 = 0` convention.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
        .sum::<f64>()
}

/// `KL(p ‖ q)` for probability vectors with strictly positive `q`
/// (softmax output always qualifies). `0·ln(0/q) = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape(format!("{} vs {} probabilities", p.len(), q.len())));
    }
    Ok(p.iter()
        .zip(q)
        .map(|(&pi, &qi)| if pi > 0.0 { pi * (pi.ln() - qi.ln()) } else { 0.0 })
        .sum())
}
