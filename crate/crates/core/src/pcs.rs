//! Pseudo conditional sampling.
//!
//! The bridge between a source classifier and a target task whose labels it
//! cannot name: run each target sample through the classifier, turn the
//! logits into a source-space label distribution, then condition the source
//! generator on those distributions to synthesize a pre-training set that
//! leans toward the target's neighborhood of the source manifold.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::ops::Range;
use std::path::Path;

use crate::data::{LabeledDataset, UnlabeledDataset};
use crate::error::{Error, Result};
use crate::generator::{ConditionalGenerator, ConditioningMode};
use crate::jsonio;
use crate::labelfn::{self, LabelDistribution, LabelFn};
use crate::mlp::MlpClassifier;
use crate::rng::derive_rng;

/// Source-space label distributions produced from target samples, plus the
/// target row each one came from.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabelSet {
    labels: Vec<LabelDistribution>,
    provenance: Vec<usize>,
}

impl PseudoLabelSet {
    pub fn new(labels: Vec<LabelDistribution>, provenance: Vec<usize>) -> Result<PseudoLabelSet> {
        if labels.is_empty() {
            return Err(Error::validation("pseudo label set must be non-empty"));
        }
        if labels.len() != provenance.len() {
            return Err(Error::shape(format!(
                "{} labels vs {} provenance rows",
                labels.len(),
                provenance.len()
            )));
        }
        let k = labels[0].num_classes();
        let space = labels[0].space();
        if labels.iter().any(|l| l.num_classes() != k || l.space() != space) {
            return Err(Error::shape("pseudo labels disagree on label space".to_string()));
        }
        Ok(PseudoLabelSet { labels, provenance })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[LabelDistribution] {
        &self.labels
    }

    pub fn provenance(&self) -> &[usize] {
        &self.provenance
    }

    pub fn num_classes(&self) -> usize {
        self.labels[0].num_classes()
    }

    pub fn space(&self) -> &str {
        self.labels[0].space()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonio::save_json(path, &PseudoLabelFile::from(self))
    }

    pub fn load(path: &Path) -> Result<PseudoLabelSet> {
        let file: PseudoLabelFile = jsonio::load_json(path)?;
        file.into_set().map_err(|e| Error::Artifact {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// On-disk form of a pseudo label set.
#[derive(Serialize, Deserialize)]
struct PseudoLabelFile {
    label_space: String,
    probs: Vec<Vec<f64>>,
    provenance: Vec<usize>,
}

impl From<&PseudoLabelSet> for PseudoLabelFile {
    fn from(set: &PseudoLabelSet) -> PseudoLabelFile {
        PseudoLabelFile {
            label_space: set.space().to_string(),
            probs: set.labels.iter().map(|l| l.probs().to_vec()).collect(),
            provenance: set.provenance.clone(),
        }
    }
}

impl PseudoLabelFile {
    fn into_set(self) -> Result<PseudoLabelSet> {
        let labels = self
            .probs
            .into_iter()
            .map(|p| LabelDistribution::new(p, self.label_space.clone()))
            .collect::<Result<Vec<_>>>()?;
        PseudoLabelSet::new(labels, self.provenance)
    }
}

/// Translate every target sample into a source-space label distribution by
/// applying `label_fn` to the source classifier's logits.
///
/// `classwise_mean` first computes per-sample softmax labels, then replaces
/// each sample's label with the mean over its target class, so all samples
/// of one target class share a single class representative. `random` draws
/// a fresh one-hot per sample from `rng`; the other functions ignore `rng`.
pub fn pseudo_labels<R: Rng>(
    classifier: &MlpClassifier,
    targets: &LabeledDataset,
    label_fn: &LabelFn,
    source_space: &str,
    rng: &mut R,
) -> Result<PseudoLabelSet> {
    if targets.n() == 0 {
        return Err(Error::validation("no target samples to pseudo-label"));
    }
    if targets.dim() != classifier.input_dim() {
        return Err(Error::shape(format!(
            "target samples have {} features, classifier expects {}",
            targets.dim(),
            classifier.input_dim()
        )));
    }
    let logits = classifier.forward(targets.features())?;
    let k = classifier.output_dim();
    let mut labels = Vec::with_capacity(targets.n());
    for r in 0..targets.n() {
        let row: Vec<f64> = logits.row(r).iter().copied().collect();
        let label = match label_fn {
            LabelFn::Softmax | LabelFn::ClasswiseMean => {
                labelfn::softmax_label(&row, source_space)?
            }
            LabelFn::TempSoftmax { tau } => labelfn::temp_softmax_label(&row, *tau, source_space)?,
            LabelFn::Argmax => labelfn::argmax_label(&row, source_space)?,
            LabelFn::Sparsemax => labelfn::sparsemax_label(&row, source_space)?,
            LabelFn::Random => labelfn::random_label(k, source_space, rng)?,
        };
        labels.push(label);
    }
    if matches!(label_fn, LabelFn::ClasswiseMean) {
        let means = labelfn::classwise_mean(&labels, targets.labels())?;
        labels = targets.labels().iter().map(|c| means[c].clone()).collect();
    }
    PseudoLabelSet::new(labels, (0..targets.n()).collect())
}

/// Sample a synthetic dataset of exactly `n` rows from the generator,
/// cycling through the pseudo labels in order (y₀, y₁, …, y₀, y₁, …).
///
/// Row `i` draws from its own stream derived from `(seed, i)`, so the
/// result is independent of how the index range is chunked: generating rows
/// `0..n` in one call equals concatenating any sharded sub-ranges, and a
/// smaller `n` is a bitwise prefix of a larger one.
pub fn build_pseudo_dataset(
    gen: &ConditionalGenerator,
    labels: &PseudoLabelSet,
    n: usize,
    seed: u64,
) -> Result<UnlabeledDataset> {
    UnlabeledDataset::new(pseudo_rows(gen, labels, 0..n, seed)?)
}

/// Pseudo-labeled pairs for the pseudo-supervised baseline: the same
/// synthetic rows as [`build_pseudo_dataset`] (given the same seed), each
/// paired with the *target* label of the sample its pseudo label came from.
pub fn pseudo_pairs(
    gen: &ConditionalGenerator,
    labels: &PseudoLabelSet,
    targets: &LabeledDataset,
    n: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if let Some(&bad) = labels.provenance().iter().find(|&&p| p >= targets.n()) {
        return Err(Error::validation(format!(
            "provenance row {bad} outside the {}-sample target set",
            targets.n()
        )));
    }
    let x = pseudo_rows(gen, labels, 0..n, seed)?;
    let m = labels.len();
    let y: Vec<usize> =
        (0..n).map(|i| targets.labels()[labels.provenance()[i % m]]).collect();
    LabeledDataset::new(x, y, targets.label_space(), targets.num_classes())
}

/// Generate rows `range` of the length-`n` cycled sampling scheme.
pub(crate) fn pseudo_rows(
    gen: &ConditionalGenerator,
    labels: &PseudoLabelSet,
    range: Range<usize>,
    seed: u64,
) -> Result<DMatrix<f64>> {
    if range.is_empty() {
        return Err(Error::validation("requested an empty sample range"));
    }
    if labels.num_classes() != gen.num_classes() {
        return Err(Error::shape(format!(
            "pseudo labels cover {} classes, generator has {}",
            labels.num_classes(),
            gen.num_classes()
        )));
    }
    let m = labels.len();
    let d = gen.dim();
    let mut out = DMatrix::zeros(range.len(), d);
    match gen.mode() {
        ConditioningMode::Interpolate => {
            // The label cycle repeats, so compute each distinct label's
            // sampling transform once instead of once per generated row.
            let transforms: Vec<(DVector<f64>, DMatrix<f64>)> = labels
                .labels()
                .iter()
                .map(|y| gen.interpolate_transform(y))
                .collect::<Result<_>>()?;
            for (out_r, i) in range.enumerate() {
                let mut rng = row_rng(seed, i);
                let (mean, sqrt) = &transforms[i % m];
                let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let x = mean + sqrt * z;
                for c in 0..d {
                    out[(out_r, c)] = x[c];
                }
            }
        }
        ConditioningMode::Mixture => {
            for (out_r, i) in range.enumerate() {
                let mut rng = row_rng(seed, i);
                let row = gen.sample(&labels.labels()[i % m], 1, &mut rng)?;
                out.row_mut(out_r).copy_from(&row.row(0));
            }
        }
    }
    Ok(out)
}

fn row_rng(seed: u64, index: usize) -> rand_chacha::ChaCha12Rng {
    derive_rng(seed, &["pcs-sample", &index.to_string()])
}
