//! Dataset containers and their JSON wire format.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonio;

/// Feature rows with integer labels drawn from a named label space.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: DMatrix<f64>,
    labels: Vec<usize>,
    label_space: String,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        features: DMatrix<f64>,
        labels: Vec<usize>,
        label_space: impl Into<String>,
        num_classes: usize,
    ) -> Result<LabeledDataset> {
        if features.nrows() != labels.len() {
            return Err(Error::shape(format!(
                "{} feature rows vs {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::validation("label space must have at least one class"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::validation(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("features contain non-finite values"));
        }
        Ok(LabeledDataset { features, labels, label_space: label_space.into(), num_classes })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn label_space(&self) -> &str {
        &self.label_space
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Row indices of every class that has at least one sample.
    pub fn class_members(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut members: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            members.entry(l).or_default().push(i);
        }
        members
    }

    /// New dataset containing the given rows, in the given order.
    pub fn subset(&self, rows: &[usize]) -> Result<LabeledDataset> {
        let mut features = DMatrix::zeros(rows.len(), self.dim());
        let mut labels = Vec::with_capacity(rows.len());
        for (out, &r) in rows.iter().enumerate() {
            if r >= self.n() {
                return Err(Error::validation(format!("row {r} out of range")));
            }
            features.row_mut(out).copy_from(&self.features.row(r));
            labels.push(self.labels[r]);
        }
        Ok(LabeledDataset {
            features,
            labels,
            label_space: self.label_space.clone(),
            num_classes: self.num_classes,
        })
    }

    /// Stack two datasets over the same label space. When either side is
    /// empty the other is returned unchanged (bit-for-bit).
    pub fn concat(&self, other: &LabeledDataset) -> Result<LabeledDataset> {
        if self.label_space != other.label_space {
            return Err(Error::validation(format!(
                "cannot concat datasets over label spaces {:?} and {:?}",
                self.label_space, other.label_space
            )));
        }
        if other.n() == 0 {
            return Ok(self.clone());
        }
        if self.n() == 0 {
            return Ok(other.clone());
        }
        if self.dim() != other.dim() {
            return Err(Error::shape(format!(
                "feature dims {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let mut features = DMatrix::zeros(self.n() + other.n(), self.dim());
        features.rows_mut(0, self.n()).copy_from(&self.features);
        features.rows_mut(self.n(), other.n()).copy_from(&other.features);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(LabeledDataset {
            features,
            labels,
            label_space: self.label_space.clone(),
            num_classes: self.num_classes.max(other.num_classes),
        })
    }

    /// Class-stratified random split into (train, validation). Each class
    /// contributes `round(n_c · val_fraction)` validation rows, but always
    /// keeps at least one training row.
    pub fn split_train_val<R: Rng>(
        &self,
        val_fraction: f64,
        rng: &mut R,
    ) -> Result<(LabeledDataset, LabeledDataset)> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::validation(format!(
                "validation fraction {val_fraction} must lie in [0, 1)"
            )));
        }
        let mut train_rows = Vec::new();
        let mut val_rows = Vec::new();
        for (_, mut members) in self.class_members() {
            members.shuffle(rng);
            let mut n_val = (members.len() as f64 * val_fraction).round() as usize;
            if n_val >= members.len() {
                n_val = members.len() - 1;
            }
            val_rows.extend_from_slice(&members[..n_val]);
            train_rows.extend_from_slice(&members[n_val..]);
        }
        train_rows.sort_unstable();
        val_rows.sort_unstable();
        Ok((self.subset(&train_rows)?, self.subset(&val_rows)?))
    }

    /// Drop the labels.
    pub fn to_unlabeled(&self) -> UnlabeledDataset {
        UnlabeledDataset { features: self.features.clone() }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonio::save_json(path, &LabeledDatasetFile::from(self))
    }

    /// Load from JSON. The file format does not carry the class count; it
    /// is inferred as `max(label) + 1`, so artifacts should contain at
    /// least one sample of the highest class.
    pub fn load(path: &Path) -> Result<LabeledDataset> {
        let file: LabeledDatasetFile = jsonio::load_json(path)?;
        file.into_dataset().map_err(|e| Error::Artifact {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// Feature rows without labels.
#[derive(Clone, Debug, PartialEq)]
pub struct UnlabeledDataset {
    features: DMatrix<f64>,
}

impl UnlabeledDataset {
    pub fn new(features: DMatrix<f64>) -> Result<UnlabeledDataset> {
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("features contain non-finite values"));
        }
        Ok(UnlabeledDataset { features })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    /// Per-dimension population standard deviation (used to scale
    /// augmentation noise to the data).
    pub fn feature_std(&self) -> Vec<f64> {
        let n = self.n().max(1) as f64;
        (0..self.dim())
            .map(|c| {
                let col = self.features.column(c);
                let mean = col.sum() / n;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                var.sqrt()
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonio::save_json(path, &UnlabeledDatasetFile::from(self))
    }

    pub fn load(path: &Path) -> Result<UnlabeledDataset> {
        let file: UnlabeledDatasetFile = jsonio::load_json(path)?;
        file.into_dataset().map_err(|e| Error::Artifact {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// Wire format: row-major nested feature arrays.
#[derive(Serialize, Deserialize)]
struct LabeledDatasetFile {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    label_space: String,
}

impl From<&LabeledDataset> for LabeledDatasetFile {
    fn from(ds: &LabeledDataset) -> LabeledDatasetFile {
        LabeledDatasetFile {
            features: matrix_to_rows(&ds.features),
            labels: ds.labels.clone(),
            label_space: ds.label_space.clone(),
        }
    }
}

impl LabeledDatasetFile {
    fn into_dataset(self) -> Result<LabeledDataset> {
        let features = rows_to_matrix(self.features)?;
        let num_classes = self.labels.iter().max().map_or(1, |&m| m + 1);
        LabeledDataset::new(features, self.labels, self.label_space, num_classes)
    }
}

#[derive(Serialize, Deserialize)]
struct UnlabeledDatasetFile {
    features: Vec<Vec<f64>>,
}

impl From<&UnlabeledDataset> for UnlabeledDatasetFile {
    fn from(ds: &UnlabeledDataset) -> UnlabeledDatasetFile {
        UnlabeledDatasetFile { features: matrix_to_rows(&ds.features) }
    }
}

impl UnlabeledDatasetFile {
    fn into_dataset(self) -> Result<UnlabeledDataset> {
        UnlabeledDataset::new(rows_to_matrix(self.features)?)
    }
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().cloned().collect()).collect()
}

pub(crate) fn rows_to_matrix(rows: Vec<Vec<f64>>) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, 0));
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::shape("ragged feature rows".to_string()));
    }
    let mut m = DMatrix::zeros(rows.len(), d);
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}
