//! Per-class Gaussian conditional generator.
//!
//! This is the stand-in for the conditional GAN of a full-scale system: for
//! each source class it stores a fitted mean and covariance, and it can
//! sample given *any* distribution over source classes, not just a one-hot.
//! Two conditioning semantics are supported:
//!
//! * [`ConditioningMode::Interpolate`] — blend the moments
//!   (`μ = Σ yᵢ μᵢ`, `Σ = Σ yᵢ Σᵢ`) and draw from the single blended
//!   Gaussian. A soft label produces samples *between* classes.
//! * [`ConditioningMode::Mixture`] — draw a class from `y`, then sample
//!   that class's Gaussian. A soft label produces samples *from several*
//!   classes.
//!
//! The two agree exactly on one-hot labels and differ in spread otherwise
//! (a mixture also carries the between-mean variance).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{matrix_to_rows, rows_to_matrix, LabeledDataset};
use crate::error::{Error, Result};
use crate::jsonio;
use crate::labelfn::LabelDistribution;
use crate::linalg::{fit_gaussian, matrix_sqrt_psd};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMode {
    Interpolate,
    Mixture,
}

impl std::str::FromStr for ConditioningMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<ConditioningMode> {
        match s {
            "interpolate" => Ok(ConditioningMode::Interpolate),
            "mixture" => Ok(ConditioningMode::Mixture),
            other => Err(Error::validation(format!(
                "unknown conditioning mode {other:?} (expected interpolate or mixture)"
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConditionalGenerator {
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
    /// Principal square roots of `covs`, cached at construction.
    cov_sqrts: Vec<DMatrix<f64>>,
    mode: ConditioningMode,
}

impl ConditionalGenerator {
    pub fn new(
        means: Vec<DVector<f64>>,
        covs: Vec<DMatrix<f64>>,
        mode: ConditioningMode,
    ) -> Result<ConditionalGenerator> {
        if means.is_empty() || means.len() != covs.len() {
            return Err(Error::shape(format!(
                "{} means vs {} covariances",
                means.len(),
                covs.len()
            )));
        }
        let d = means[0].len();
        for (c, (m, cov)) in means.iter().zip(&covs).enumerate() {
            if m.len() != d || cov.nrows() != d || cov.ncols() != d {
                return Err(Error::shape(format!("class {c} moments disagree on dimension {d}")));
            }
        }
        let cov_sqrts =
            covs.iter().map(matrix_sqrt_psd).collect::<Result<Vec<_>>>()?;
        Ok(ConditionalGenerator { means, covs, cov_sqrts, mode })
    }

    /// Fit per-class moments from a labeled dataset. Every class of the
    /// dataset's label space must be present.
    pub fn fit(ds: &LabeledDataset, mode: ConditioningMode) -> Result<ConditionalGenerator> {
        let members = ds.class_members();
        let mut means = Vec::with_capacity(ds.num_classes());
        let mut covs = Vec::with_capacity(ds.num_classes());
        for c in 0..ds.num_classes() {
            let rows = members.get(&c).ok_or_else(|| {
                Error::validation(format!("class {c} has no samples to fit"))
            })?;
            let mut class_features = DMatrix::zeros(rows.len(), ds.dim());
            for (out, &r) in rows.iter().enumerate() {
                class_features.row_mut(out).copy_from(&ds.features().row(r));
            }
            let (mean, cov) = fit_gaussian(&class_features)?;
            means.push(mean);
            covs.push(cov);
        }
        ConditionalGenerator::new(means, covs, mode)
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn mode(&self) -> ConditioningMode {
        self.mode
    }

    pub fn class_moments(&self, class: usize) -> Result<(&DVector<f64>, &DMatrix<f64>)> {
        if class >= self.num_classes() {
            return Err(Error::validation(format!("class {class} out of range")));
        }
        Ok((&self.means[class], &self.covs[class]))
    }

    fn check_label(&self, y: &LabelDistribution) -> Result<()> {
        if y.num_classes() != self.num_classes() {
            return Err(Error::shape(format!(
                "label has {} classes, generator has {}",
                y.num_classes(),
                self.num_classes()
            )));
        }
        Ok(())
    }

    /// Moment blend used by interpolate conditioning:
    /// `μ(y) = Σ yᵢ μᵢ`, `Σ(y) = Σ yᵢ Σᵢ`.
    pub fn conditional_moments(
        &self,
        y: &LabelDistribution,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        self.check_label(y)?;
        let d = self.dim();
        let mut mean = DVector::zeros(d);
        let mut cov = DMatrix::zeros(d, d);
        for (c, &w) in y.probs().iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            mean.axpy(w, &self.means[c], 1.0);
            cov.zip_apply(&self.covs[c], |acc, v| *acc += w * v);
        }
        Ok((mean, cov))
    }

    /// Draw `n` samples conditioned on `y`, row per sample.
    ///
    /// Draw order is fixed (per row: class index if in mixture mode, then
    /// `dim` standard normals) and is part of the determinism contract.
    pub fn sample<R: Rng>(
        &self,
        y: &LabelDistribution,
        n: usize,
        rng: &mut R,
    ) -> Result<DMatrix<f64>> {
        self.check_label(y)?;
        match self.mode {
            ConditioningMode::Interpolate => {
                let (mean, sqrt) = self.interpolate_transform(y)?;
                let mut out = DMatrix::zeros(n, self.dim());
                for r in 0..n {
                    self.fill_row(&mut out, r, &mean, &sqrt, rng);
                }
                Ok(out)
            }
            ConditioningMode::Mixture => {
                let mut out = DMatrix::zeros(n, self.dim());
                for r in 0..n {
                    let c = draw_class(y.probs(), rng);
                    self.fill_row(&mut out, r, &self.means[c], &self.cov_sqrts[c], rng);
                }
                Ok(out)
            }
        }
    }

    /// Mean and covariance square root for interpolate conditioning; exact
    /// one-hot labels reuse the cached per-class square root.
    pub(crate) fn interpolate_transform(
        &self,
        y: &LabelDistribution,
    ) -> Result<(DVector<f64>, DMatrix<f64>)> {
        if let Some(c) = exact_one_hot(y.probs()) {
            return Ok((self.means[c].clone(), self.cov_sqrts[c].clone()));
        }
        let (mean, cov) = self.conditional_moments(y)?;
        Ok((mean, matrix_sqrt_psd(&cov)?))
    }

    fn fill_row<R: Rng>(
        &self,
        out: &mut DMatrix<f64>,
        row: usize,
        mean: &DVector<f64>,
        sqrt: &DMatrix<f64>,
        rng: &mut R,
    ) {
        let d = self.dim();
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = mean + sqrt * z;
        for c in 0..d {
            out[(row, c)] = x[c];
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonio::save_json(path, &GeneratorFile::from(self))
    }

    pub fn load(path: &Path) -> Result<ConditionalGenerator> {
        let file: GeneratorFile = jsonio::load_json(path)?;
        file.into_generator().map_err(|e| Error::Artifact {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// Exact one-hot detection: a single entry equal to 1.0, the rest 0.0.
pub(crate) fn exact_one_hot(probs: &[f64]) -> Option<usize> {
    let mut hot = None;
    for (i, &p) in probs.iter().enumerate() {
        if p == 1.0 {
            if hot.is_some() {
                return None;
            }
            hot = Some(i);
        } else if p != 0.0 {
            return None;
        }
    }
    hot
}

/// Inverse-CDF draw from a probability vector; consumes one uniform.
pub(crate) fn draw_class<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last_nonzero = 0;
    for (c, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_nonzero = c;
            cum += p;
            if u < cum {
                return c;
            }
        }
    }
    // Rounding left cum slightly below 1; charge the tail to the last class.
    last_nonzero
}

/// Wire format: per-class mean vectors and row-major covariance matrices.
#[derive(Serialize, Deserialize)]
struct GeneratorFile {
    means: Vec<Vec<f64>>,
    covs: Vec<Vec<Vec<f64>>>,
    mode: ConditioningMode,
}

impl From<&ConditionalGenerator> for GeneratorFile {
    fn from(g: &ConditionalGenerator) -> GeneratorFile {
        GeneratorFile {
            means: g.means.iter().map(|m| m.iter().cloned().collect()).collect(),
            covs: g.covs.iter().map(matrix_to_rows).collect(),
            mode: g.mode,
        }
    }
}

impl GeneratorFile {
    fn into_generator(self) -> Result<ConditionalGenerator> {
        let means = self.means.into_iter().map(DVector::from_vec).collect();
        let covs =
            self.covs.into_iter().map(rows_to_matrix).collect::<Result<Vec<_>>>()?;
        ConditionalGenerator::new(means, covs, self.mode)
    }
}
