//! Evaluation and diagnostic metrics.
//!
//! The load-bearing one is [`frechet_distance`]: the exact Fréchet (2-
//! Wasserstein) distance between the Gaussians fitted to two sample clouds,
//!
//! ```text
//! FD² = ‖μ₁ − μ₂‖² + tr(Σ₁ + Σ₂ − 2·(Σ₁^{1/2} Σ₂ Σ₁^{1/2})^{1/2})
//! ```
//!
//! computed on raw features (no embedding network at this scale). It is the
//! quantity whose rank correlation with transfer gain the alignment study
//! in [`crate::harness`] measures.

use std::collections::BTreeSet;

use nalgebra::DMatrix;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{fit_gaussian, matrix_sqrt_psd};
use crate::loss::softmax;
use crate::mlp::MlpClassifier;

/// Fraction of correctly classified rows (argmax, ties to lowest index).
pub fn accuracy(model: &MlpClassifier, ds: &LabeledDataset) -> Result<f64> {
    if ds.n() == 0 {
        return Err(Error::validation("cannot score an empty dataset"));
    }
    let pred = model.predict(ds.features())?;
    let correct = pred.iter().zip(ds.labels()).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / ds.n() as f64)
}

/// Fréchet distance between the Gaussians fitted to two sample clouds
/// (rows are samples). Requires at least two rows on each side; singular
/// fitted covariances are ridge-regularized by the fitting step.
pub fn frechet_distance(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    if x.ncols() != y.ncols() {
        return Err(Error::shape(format!(
            "feature dims {} vs {}",
            x.ncols(),
            y.ncols()
        )));
    }
    if x.nrows() < 2 || y.nrows() < 2 {
        return Err(Error::validation(
            "Fréchet distance needs at least 2 samples per side".to_string(),
        ));
    }
    let (mu_x, cov_x) = fit_gaussian(x)?;
    let (mu_y, cov_y) = fit_gaussian(y)?;

    let sqrt_x = matrix_sqrt_psd(&cov_x)?;
    // √Σx · Σy · √Σx is symmetric PSD in exact arithmetic; symmetrize away
    // the rounding before taking its root.
    let mut inner = &sqrt_x * &cov_y * &sqrt_x;
    for i in 0..inner.nrows() {
        for j in (i + 1)..inner.ncols() {
            let m = 0.5 * (inner[(i, j)] + inner[(j, i)]);
            inner[(i, j)] = m;
            inner[(j, i)] = m;
        }
    }
    let cross = matrix_sqrt_psd(&inner)?;

    let mean_term = (&mu_x - &mu_y).norm_squared();
    let fd = mean_term + cov_x.trace() + cov_y.trace() - 2.0 * cross.trace();
    // The exact value is ≥ 0. Clip eigen-rounding noise, but refuse to
    // hide anything larger — that would mean the square root is wrong.
    if fd < -1e-6 {
        return Err(Error::NotPsd(format!(
            "Fréchet distance computed as {fd}, far below zero"
        )));
    }
    Ok(fd.max(0.0))
}

/// Source classes that the source classifier considers plausible for the
/// target data: for each target class, average the classifier's softmax
/// over that class's samples, keep source classes whose mean probability
/// exceeds `threshold` (strictly) for *any* target class, and return their
/// union.
pub fn confidence_filter(
    model: &MlpClassifier,
    target: &LabeledDataset,
    threshold: f64,
) -> Result<BTreeSet<usize>> {
    if target.n() == 0 {
        return Err(Error::validation("cannot filter against an empty dataset"));
    }
    let logits = model.forward(target.features())?;
    let k_s = model.output_dim();
    let mut kept = BTreeSet::new();
    for (_, rows) in target.class_members() {
        let mut mean = vec![0.0; k_s];
        for &r in &rows {
            let row: Vec<f64> = logits.row(r).iter().cloned().collect();
            for (acc, p) in mean.iter_mut().zip(softmax(&row)) {
                *acc += p;
            }
        }
        for (c, acc) in mean.iter().enumerate() {
            if acc / rows.len() as f64 > threshold {
                kept.insert(c);
            }
        }
    }
    Ok(kept)
}

/// Spearman rank correlation outcome. When either input has zero rank
/// variance (all values tied) the coefficient is undefined; that case is
/// reported explicitly rather than as NaN or a silent 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpearmanResult {
    Rho(f64),
    Degenerate,
}

impl SpearmanResult {
    pub fn rho(&self) -> Option<f64> {
        match self {
            SpearmanResult::Rho(r) => Some(*r),
            SpearmanResult::Degenerate => None,
        }
    }
}

/// Spearman rank correlation with average ranks on ties. Needs n ≥ 3.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<SpearmanResult> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} vs {} observations", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::validation(format!(
            "need at least 3 observations for a rank correlation, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::validation("observations must be finite"));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);

    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0; // mean of 1..n, invariant under tie averaging
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mean) * (b - mean);
        var_x += (a - mean) * (a - mean);
        var_y += (b - mean) * (b - mean);
    }
    if var_x == 0.0 || var_y == 0.0 {
        return Ok(SpearmanResult::Degenerate);
    }
    Ok(SpearmanResult::Rho(cov / (var_x * var_y).sqrt()))
}

/// 1-based ranks; tied values share the average of their rank range.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        // Positions i..=j (0-based) hold ties; their 1-based ranks average
        // to (i + j)/2 + 1.
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}
