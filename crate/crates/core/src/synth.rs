//! Synthetic source/target task pairs with disjoint label spaces.
//!
//! A task pair is built from a seed in a fixed draw order: source class
//! means on a sphere, random per-class covariances, target class means as
//! convex mixtures of source means (optionally perturbed), target
//! covariances, then the actual samples. Two calls with the same spec
//! produce bit-identical datasets, and varying only `sigma_align` leaves
//! every other draw untouched — which is what makes alignment ladders
//! comparable rung to rung.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::{matrix_sqrt_psd, random_orthogonal};
use crate::mlp::MlpClassifier;
use crate::rng::derive_rng;
use crate::train::{self, TrainConfig, TrainLog};

/// Label-space names stamped on the generated datasets. Source and target
/// spaces are distinct on purpose: a label from one must never be usable
/// in the other without an explicit translation step.
pub const SOURCE_SPACE: &str = "source";
pub const TARGET_SPACE: &str = "target";

/// Radius of the sphere the source class means are drawn on.
pub const MEAN_RADIUS: f64 = 5.0;
/// Covariance eigenvalues are drawn uniformly from this range, which bounds
/// every class covariance's condition number by `COV_EIG_HI / COV_EIG_LO`.
pub const COV_EIG_LO: f64 = 0.5;
pub const COV_EIG_HI: f64 = 2.0;
/// How many source classes the default mixing matrix blends per target class.
const DEFAULT_MIX_COMPONENTS: usize = 2;

fn simplex_row_ok(row: &[f64]) -> bool {
    row.iter().all(|&w| w.is_finite() && w >= 0.0)
        && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-9
}

/// Everything needed to rebuild a task pair deterministically.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TaskPairSpec {
    pub dim: usize,
    pub source_classes: usize,
    pub target_classes: usize,
    /// Source samples drawn per source class.
    pub source_per_class: usize,
    /// Total target training samples (split as evenly as possible per class).
    pub target_train: usize,
    pub target_test: usize,
    /// Row `k` expresses target class `k` as a convex combination of source
    /// classes; rows must lie on the probability simplex.
    pub mixing: Vec<Vec<f64>>,
    /// Scale of the Gaussian perturbation applied to the mixed target means.
    /// At 0 each target mean sits exactly on its source-mean combination;
    /// larger values push the tasks apart.
    pub sigma_align: f64,
    pub seed: u64,
}

impl TaskPairSpec {
    /// The default desk-scale task: 20 source classes feeding 8 target
    /// classes in 16 dimensions, two disjoint source components per target
    /// class, perfectly aligned (`sigma_align = 0`).
    pub fn desk_default(seed: u64) -> TaskPairSpec {
        TaskPairSpec {
            dim: 16,
            source_classes: 20,
            target_classes: 8,
            source_per_class: 500,
            target_train: 200,
            target_test: 400,
            mixing: default_mixing(8, 20, seed),
            sigma_align: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::validation("feature dimension must be ≥ 1"));
        }
        if self.source_classes < 2 || self.target_classes < 2 {
            return Err(Error::validation("need at least two classes on each side"));
        }
        if self.source_per_class < 2 {
            return Err(Error::validation(
                "need at least two source samples per class to fit covariances",
            ));
        }
        if self.target_train < self.target_classes || self.target_test < self.target_classes {
            return Err(Error::validation(
                "target splits need at least one sample per class",
            ));
        }
        if self.mixing.len() != self.target_classes {
            return Err(Error::shape(format!(
                "mixing matrix has {} rows for {} target classes",
                self.mixing.len(),
                self.target_classes
            )));
        }
        for (k, row) in self.mixing.iter().enumerate() {
            if row.len() != self.source_classes {
                return Err(Error::shape(format!(
                    "mixing row {k} has {} entries for {} source classes",
                    row.len(),
                    self.source_classes
                )));
            }
            if !simplex_row_ok(row) {
                return Err(Error::validation(format!(
                    "mixing row {k} is not on the probability simplex"
                )));
            }
        }
        if !self.sigma_align.is_finite() || self.sigma_align < 0.0 {
            return Err(Error::validation("sigma_align must be finite and ≥ 0"));
        }
        Ok(())
    }
}

/// Default mixing matrix: each target class blends `DEFAULT_MIX_COMPONENTS`
/// source classes chosen by a seeded permutation, so no source class feeds
/// two target classes. Weights are drawn away from the simplex corners
/// (each component gets at least a quarter of the mass) so every target
/// class is a genuine mixture rather than a relabeled source class.
///
/// Requires `target_classes * DEFAULT_MIX_COMPONENTS <= source_classes`.
pub fn default_mixing(target_classes: usize, source_classes: usize, seed: u64) -> Vec<Vec<f64>> {
    assert!(
        target_classes * DEFAULT_MIX_COMPONENTS <= source_classes,
        "not enough source classes for {target_classes} disjoint mixtures"
    );
    let mut rng = derive_rng(seed, &["task", "mixing"]);
    let mut perm: Vec<usize> = (0..source_classes).collect();
    perm.shuffle(&mut rng);
    let mut rows = Vec::with_capacity(target_classes);
    for k in 0..target_classes {
        let mut row = vec![0.0; source_classes];
        let a = perm[DEFAULT_MIX_COMPONENTS * k];
        let b = perm[DEFAULT_MIX_COMPONENTS * k + 1];
        let w: f64 = rng.random_range(0.25..0.75);
        row[a] = w;
        row[b] = 1.0 - w;
        rows.push(row);
    }
    rows
}

/// The ground-truth moments behind a generated task pair. Not consumed by
/// any training method — kept for tests and diagnostics.
#[derive(Clone, Debug)]
pub struct TaskTruth {
    pub source_means: Vec<DVector<f64>>,
    pub source_covs: Vec<DMatrix<f64>>,
    pub target_means: Vec<DVector<f64>>,
    pub target_covs: Vec<DMatrix<f64>>,
    /// Target-by-source mixing matrix actually used.
    pub mixing: DMatrix<f64>,
}

pub struct TaskPair {
    pub source: LabeledDataset,
    pub target_train: LabeledDataset,
    pub target_test: LabeledDataset,
    pub truth: TaskTruth,
}

/// Split `total` samples as evenly as possible over `k` classes; earlier
/// classes absorb the remainder.
fn per_class_counts(total: usize, k: usize) -> Vec<usize> {
    (0..k).map(|c| total / k + usize::from(c < total % k)).collect()
}

/// Random covariance with eigenvalues uniform in `[COV_EIG_LO, COV_EIG_HI]`
/// and a uniformly random eigenbasis.
fn random_cov<R: Rng>(d: usize, rng: &mut R) -> DMatrix<f64> {
    let q = random_orthogonal(d, rng);
    let eigs = DVector::from_fn(d, |_, _| rng.random_range(COV_EIG_LO..COV_EIG_HI));
    let a = &q * DMatrix::from_diagonal(&eigs) * q.transpose();
    // Symmetrize away the multiplication round-off so downstream square
    // roots accept the matrix without complaint.
    0.5 * (&a + a.transpose())
}

/// Unit vector times `MEAN_RADIUS`, direction uniform on the sphere.
fn sphere_point<R: Rng>(d: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 1e-9 {
            return (MEAN_RADIUS / norm) * v;
        }
    }
}

/// Fill rows `[row0, row0 + n)` of `out` with draws from
/// `N(mean, sqrt·sqrtᵀ)`, one row per sample, `dim` normals per row.
fn fill_gaussian_rows<R: Rng>(
    out: &mut DMatrix<f64>,
    row0: usize,
    n: usize,
    mean: &DVector<f64>,
    sqrt: &DMatrix<f64>,
    rng: &mut R,
) {
    let d = mean.len();
    for r in 0..n {
        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = mean + sqrt * z;
        for c in 0..d {
            out[(row0 + r, c)] = x[c];
        }
    }
}

/// Build the full task pair described by `spec`.
///
/// Draw order (all streams derived from `spec.seed`): source means, source
/// covariances, target perturbations, target covariances, source samples,
/// target training samples, target test samples. The perturbation vectors
/// are drawn even when `sigma_align` is 0, so specs differing only in
/// `sigma_align` share every class position and sample direction.
pub fn make_task_pair(spec: &TaskPairSpec) -> Result<TaskPair> {
    spec.validate()?;
    let d = spec.dim;
    let k_s = spec.source_classes;
    let k_t = spec.target_classes;

    let mut means_rng = derive_rng(spec.seed, &["task", "source-means"]);
    let source_means: Vec<DVector<f64>> =
        (0..k_s).map(|_| sphere_point(d, &mut means_rng)).collect();

    let mut scov_rng = derive_rng(spec.seed, &["task", "source-covs"]);
    let source_covs: Vec<DMatrix<f64>> = (0..k_s).map(|_| random_cov(d, &mut scov_rng)).collect();

    let mut align_rng = derive_rng(spec.seed, &["task", "align"]);
    let mut target_means = Vec::with_capacity(k_t);
    for row in &spec.mixing {
        let mut mean = DVector::zeros(d);
        for (c, &w) in row.iter().enumerate() {
            if w != 0.0 {
                mean.axpy(w, &source_means[c], 1.0);
            }
        }
        let eps = DVector::from_fn(d, |_, _| align_rng.sample::<f64, _>(StandardNormal));
        if spec.sigma_align != 0.0 {
            mean.axpy(spec.sigma_align, &eps, 1.0);
        }
        target_means.push(mean);
    }

    let mut tcov_rng = derive_rng(spec.seed, &["task", "target-covs"]);
    let target_covs: Vec<DMatrix<f64>> = (0..k_t).map(|_| random_cov(d, &mut tcov_rng)).collect();

    let source_sqrts = source_covs.iter().map(matrix_sqrt_psd).collect::<Result<Vec<_>>>()?;
    let target_sqrts = target_covs.iter().map(matrix_sqrt_psd).collect::<Result<Vec<_>>>()?;

    let mut ssamp_rng = derive_rng(spec.seed, &["task", "source-samples"]);
    let n_source = k_s * spec.source_per_class;
    let mut source_x = DMatrix::zeros(n_source, d);
    let mut source_y = Vec::with_capacity(n_source);
    for c in 0..k_s {
        fill_gaussian_rows(
            &mut source_x,
            c * spec.source_per_class,
            spec.source_per_class,
            &source_means[c],
            &source_sqrts[c],
            &mut ssamp_rng,
        );
        source_y.extend(std::iter::repeat_n(c, spec.source_per_class));
    }
    let source = LabeledDataset::new(source_x, source_y, SOURCE_SPACE, k_s)?;

    let make_target = |total: usize, rng: &mut rand_chacha::ChaCha12Rng| -> Result<LabeledDataset> {
        let counts = per_class_counts(total, k_t);
        let mut x = DMatrix::zeros(total, d);
        let mut y = Vec::with_capacity(total);
        let mut row = 0;
        for (k, &n_k) in counts.iter().enumerate() {
            fill_gaussian_rows(&mut x, row, n_k, &target_means[k], &target_sqrts[k], rng);
            y.extend(std::iter::repeat_n(k, n_k));
            row += n_k;
        }
        LabeledDataset::new(x, y, TARGET_SPACE, k_t)
    };

    let mut ttrain_rng = derive_rng(spec.seed, &["task", "target-train"]);
    let target_train = make_target(spec.target_train, &mut ttrain_rng)?;
    let mut ttest_rng = derive_rng(spec.seed, &["task", "target-test"]);
    let target_test = make_target(spec.target_test, &mut ttest_rng)?;

    let mixing = DMatrix::from_fn(k_t, k_s, |r, c| spec.mixing[r][c]);
    Ok(TaskPair {
        source,
        target_train,
        target_test,
        truth: TaskTruth { source_means, source_covs, target_means, target_covs, mixing },
    })
}

/// Train the source classifier `[dim, hidden.., source_classes]` on the
/// source dataset.
pub fn train_source_classifier(
    source: &LabeledDataset,
    hidden: &[usize],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(MlpClassifier, TrainLog)> {
    let mut widths = Vec::with_capacity(hidden.len() + 2);
    widths.push(source.dim());
    widths.extend_from_slice(hidden);
    widths.push(source.num_classes());
    let init = train::init_classifier(&widths, seed)?;
    train::train_supervised(&init, source, None, cfg, seed)
}
