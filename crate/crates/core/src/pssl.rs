//! Pseudo semi-supervised learning: treat synthetic generator samples as an
//! unlabeled pool next to the real labeled target set.
//!
//! Every variant minimizes `L_sup + λ·L_unsup` where the unsupervised term
//! is computed on a fresh pool batch each supervised step. Targets for the
//! unsupervised term are always *detached*: they are probability vectors
//! computed from the current network and then treated as constants, so no
//! gradient flows through them.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::data::{LabeledDataset, UnlabeledDataset};
use crate::error::{Error, Result};
use crate::loss::{cross_entropy_hard, cross_entropy_soft, entropy, softmax};
use crate::mlp::{Gradients, MlpClassifier};
use crate::rng::derive_rng;
use crate::train::{train_supervised, train_with_aux, AuxObjective, TrainConfig, TrainLog};

/// The unsupervised objective applied to pool batches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SslMethod {
    /// Sharpened soft targets, confidence mask, prediction on an augmented view.
    Uda,
    /// Hard targets from the clean view, confidence mask, prediction on an
    /// augmented view.
    Fixmatch,
    /// Hard targets and prediction on the same clean view, confidence mask.
    PseudoLabel,
    /// Sharpened soft targets and prediction on the same clean view, no mask.
    SoftPseudoLabel,
    /// Entropy of the clean prediction itself; no targets, no mask.
    Entmin,
    /// Uda without the confidence mask.
    Consistency,
}

impl SslMethod {
    pub const ALL: [SslMethod; 6] = [
        SslMethod::Uda,
        SslMethod::Fixmatch,
        SslMethod::PseudoLabel,
        SslMethod::SoftPseudoLabel,
        SslMethod::Entmin,
        SslMethod::Consistency,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SslMethod::Uda => "uda",
            SslMethod::Fixmatch => "fixmatch",
            SslMethod::PseudoLabel => "pseudo_label",
            SslMethod::SoftPseudoLabel => "soft_pseudo_label",
            SslMethod::Entmin => "entmin",
            SslMethod::Consistency => "consistency",
        }
    }

    /// Trains against full probability vectors. `Entmin` belongs to neither
    /// target family — it has no pseudo-targets at all.
    pub fn uses_soft_targets(&self) -> bool {
        matches!(self, SslMethod::Uda | SslMethod::SoftPseudoLabel | SslMethod::Consistency)
    }

    /// Trains against one-hot argmax targets.
    pub fn uses_hard_targets(&self) -> bool {
        matches!(self, SslMethod::PseudoLabel | SslMethod::Fixmatch)
    }
}

impl FromStr for SslMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<SslMethod> {
        SslMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::validation(format!(
                    "unknown ssl method {s:?} (expected one of uda, fixmatch, pseudo_label, \
                     soft_pseudo_label, entmin, consistency)"
                ))
            })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SslConfig {
    pub method: SslMethod,
    /// Weight of the unsupervised term; 0 disables it entirely.
    pub lambda: f64,
    /// Confidence threshold: a sample participates only when its target
    /// distribution's max probability strictly exceeds `beta`.
    pub beta: f64,
    /// Sharpening temperature for soft targets (logits are divided by it).
    pub tau: f64,
    pub unsup_batch: usize,
    pub augment_strength: f64,
}

impl SslConfig {
    /// Desk-scale default: UDA at full weight, β = 0.5, τ = 0.4.
    pub fn desk_default() -> SslConfig {
        SslConfig {
            method: SslMethod::Uda,
            lambda: 1.0,
            beta: 0.5,
            tau: 0.4,
            unsup_batch: 64,
            augment_strength: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::validation("unsupervised weight must be finite and ≥ 0"));
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(Error::validation("confidence threshold must lie in [0, 1]"));
        }
        if !self.tau.is_finite() || self.tau <= 0.0 {
            return Err(Error::validation("sharpening temperature must be > 0"));
        }
        if self.unsup_batch == 0 {
            return Err(Error::validation("unsupervised batch size must be ≥ 1"));
        }
        if !self.augment_strength.is_finite() || self.augment_strength < 0.0 {
            return Err(Error::validation("augmentation strength must be finite and ≥ 0"));
        }
        Ok(())
    }
}

/// Feature-space augmentation calibrated to a pool: additive Gaussian noise
/// of `strength · per-coordinate-std`, then each coordinate is zeroed with
/// probability `0.1 · strength`. Strength 0 is the identity (and consumes
/// no randomness).
#[derive(Clone, Debug)]
pub struct Augmenter {
    strength: f64,
    feature_std: Vec<f64>,
}

impl Augmenter {
    pub fn fit(pool: &UnlabeledDataset, strength: f64) -> Result<Augmenter> {
        if !strength.is_finite() || strength < 0.0 {
            return Err(Error::validation("augmentation strength must be finite and ≥ 0"));
        }
        if strength > 10.0 {
            return Err(Error::validation(
                "augmentation strength above 10 would zero coordinates with probability > 1",
            ));
        }
        Ok(Augmenter { strength, feature_std: pool.feature_std() })
    }

    /// Augment a batch, row-major draw order: per coordinate one standard
    /// normal (noise) then one uniform (zeroing decision).
    pub fn augment<R: Rng>(&self, x: &DMatrix<f64>, rng: &mut R) -> DMatrix<f64> {
        if self.strength == 0.0 {
            return x.clone();
        }
        let drop_p = 0.1 * self.strength;
        let mut out = x.clone();
        for r in 0..out.nrows() {
            for c in 0..out.ncols() {
                let noise: f64 = rng.sample(rand_distr::StandardNormal);
                out[(r, c)] += self.strength * self.feature_std[c] * noise;
                if rng.random_range(0.0..1.0) < drop_p {
                    out[(r, c)] = 0.0;
                }
            }
        }
        out
    }
}

/// One unsupervised step on the batch `x_u`: loss (mean over the *full*
/// batch, masked rows counting zero) and parameter gradients. `None` when
/// the confidence mask removed every row.
pub(crate) fn unsup_step<R: Rng>(
    model: &MlpClassifier,
    x_u: &DMatrix<f64>,
    cfg: &SslConfig,
    augmenter: &Augmenter,
    rng: &mut R,
) -> Result<Option<(f64, Gradients)>> {
    let b = x_u.nrows();
    let k = model.output_dim();

    // The prediction branch: clean-view methods backprop through the same
    // pass that produced their targets (targets are copied out as plain
    // numbers, so they stay constants); augmented-view methods take a
    // separate detached clean pass for targets.
    let (cache, clean_rows) = match cfg.method {
        SslMethod::Uda | SslMethod::Fixmatch | SslMethod::Consistency => {
            let clean = model.forward(x_u)?;
            // Augment unconditionally so randomness consumption does not
            // depend on which rows end up masked.
            let augmented = augmenter.augment(x_u, rng);
            (model.forward_cached(&augmented)?, Some(clean))
        }
        SslMethod::PseudoLabel | SslMethod::SoftPseudoLabel | SslMethod::Entmin => {
            (model.forward_cached(x_u)?, None)
        }
    };
    let pred_logits = cache.logits();

    let mut dlogits = DMatrix::zeros(b, k);
    let mut loss_sum = 0.0;
    let mut active = 0usize;
    for r in 0..b {
        let target_logits: Vec<f64> = match &clean_rows {
            Some(clean) => clean.row(r).iter().copied().collect(),
            None => pred_logits.row(r).iter().copied().collect(),
        };
        let pred_row: Vec<f64> = pred_logits.row(r).iter().copied().collect();

        let contribution = match cfg.method {
            SslMethod::Uda | SslMethod::Consistency | SslMethod::SoftPseudoLabel => {
                let sharpened: Vec<f64> =
                    target_logits.iter().map(|&z| z / cfg.tau).collect();
                let target = softmax(&sharpened);
                let masked = cfg.method != SslMethod::Consistency
                    && cfg.method != SslMethod::SoftPseudoLabel
                    && target.iter().cloned().fold(f64::MIN, f64::max) <= cfg.beta;
                if masked { None } else { Some(cross_entropy_soft(&pred_row, &target)?) }
            }
            SslMethod::Fixmatch | SslMethod::PseudoLabel => {
                let probs = softmax(&target_logits);
                let (argmax, max_p) = probs
                    .iter()
                    .enumerate()
                    .fold((0, f64::MIN), |(bi, bp), (i, &p)| if p > bp { (i, p) } else { (bi, bp) });
                if max_p <= cfg.beta {
                    None
                } else {
                    Some(cross_entropy_hard(&pred_row, argmax)?)
                }
            }
            SslMethod::Entmin => {
                let probs = softmax(&pred_row);
                let h = entropy(&probs);
                let grad: Vec<f64> =
                    probs.iter().map(|&p| -p * (if p > 0.0 { p.ln() } else { 0.0 } + h)).collect();
                Some((h, grad))
            }
        };

        if let Some((loss, grad)) = contribution {
            active += 1;
            loss_sum += loss;
            for c in 0..k {
                dlogits[(r, c)] = grad[c];
            }
        }
    }

    if active == 0 {
        return Ok(None);
    }
    let grads = model.backward_from_cache(&cache, &dlogits)?;
    Ok(Some((loss_sum / b as f64, grads)))
}

/// Pool-batch auxiliary objective plugged into the supervised loop.
struct UnsupAux<'a> {
    pool: &'a UnlabeledDataset,
    cfg: &'a SslConfig,
    augmenter: Augmenter,
    rng: rand_chacha::ChaCha12Rng,
}

impl AuxObjective for UnsupAux<'_> {
    fn weight(&self) -> f64 {
        self.cfg.lambda
    }

    fn step_grad(
        &mut self,
        model: &MlpClassifier,
        _batch_x: &DMatrix<f64>,
        _batch_logits: &DMatrix<f64>,
    ) -> Result<Option<(f64, Gradients)>> {
        let n = self.pool.n();
        let mut x_u = DMatrix::zeros(self.cfg.unsup_batch, self.pool.dim());
        for r in 0..self.cfg.unsup_batch {
            let i = self.rng.random_range(0..n);
            x_u.row_mut(r).copy_from(&self.pool.features().row(i));
        }
        unsup_step(model, &x_u, self.cfg, &self.augmenter, &mut self.rng)
    }
}

/// Train on the labeled target set plus an unlabeled synthetic pool.
///
/// Pool batches are drawn with replacement from a dedicated stream
/// (`"pssl"/"unsup"`), so the supervised side of the run — shuffling,
/// batches, updates when `lambda` is 0 — is bit-identical to
/// [`train_supervised`] with the same seed.
pub fn train_pssl(
    init: &MlpClassifier,
    train: &LabeledDataset,
    pool: &UnlabeledDataset,
    val: Option<&LabeledDataset>,
    ssl: &SslConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(MlpClassifier, TrainLog)> {
    ssl.validate()?;
    if pool.n() == 0 {
        return Err(Error::validation("unlabeled pool is empty"));
    }
    if pool.dim() != train.dim() {
        return Err(Error::shape(format!(
            "pool features have dimension {}, labeled data {}",
            pool.dim(),
            train.dim()
        )));
    }
    let augmenter = Augmenter::fit(pool, ssl.augment_strength)?;
    let mut aux = UnsupAux {
        pool,
        cfg: ssl,
        augmenter,
        rng: derive_rng(seed, &["pssl", "unsup"]),
    };
    train_with_aux(init, train, val, cfg, seed, Some(&mut aux))
}

/// The pseudo-supervised baseline: treat synthetic pairs as if they were
/// real labeled data and train on the concatenation. With an empty pair set
/// this is exactly supervised training on `train` alone.
pub fn train_pseudo_supervised(
    init: &MlpClassifier,
    train: &LabeledDataset,
    pairs: &LabeledDataset,
    val: Option<&LabeledDataset>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(MlpClassifier, TrainLog)> {
    train_supervised(init, &train.concat(pairs)?, val, cfg, seed)
}
