//! The supervised training loop all methods share.
//!
//! Fine-tuning from scratch, fine-tuning a pre-trained net, knowledge
//! distillation, and pseudo semi-supervised learning differ only in an
//! optional auxiliary objective added to the per-batch cross-entropy. They
//! all run through [`train_with_aux`] so the bookkeeping (shuffling,
//! schedule, divergence checks, logging) exists exactly once — and so the
//! degeneracy guarantees hold structurally: with the auxiliary weight at 0
//! the auxiliary branch is never executed, making the run bit-identical to
//! plain supervised training.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::loss::cross_entropy_hard;
use crate::metrics::accuracy;
use crate::mlp::{Gradients, MlpClassifier};
use crate::optim::{Sgd, SgdConfig};
use crate::rng::derive_rng;

use rand::seq::SliceRandom;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: SgdConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation("batch size must be ≥ 1"));
        }
        self.optimizer.validate()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean supervised loss over the epoch's batches.
    pub sup_loss: f64,
    /// Mean auxiliary loss over batches where it was active (0 otherwise).
    pub aux_loss: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainLog {
    pub fn final_val_accuracy(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.val_accuracy)
    }
}

/// An extra objective evaluated once per supervised batch.
pub(crate) trait AuxObjective {
    /// Multiplier applied to the auxiliary gradients. A weight of exactly 0
    /// disables the branch without evaluating it.
    fn weight(&self) -> f64;

    /// Auxiliary loss and its (unweighted) parameter gradients for this
    /// step. `batch_x`/`batch_logits` are the supervised batch and the
    /// student's logits on it; implementations relying on their own data
    /// (e.g. an unlabeled pool) may ignore both. `None` means the objective
    /// contributed nothing this step (all samples masked out).
    fn step_grad(
        &mut self,
        model: &MlpClassifier,
        batch_x: &DMatrix<f64>,
        batch_logits: &DMatrix<f64>,
    ) -> Result<Option<(f64, Gradients)>>;
}

/// Fresh He-initialized classifier with its init stream derived from
/// `seed` alone. Every method that trains a target network from scratch
/// (plain supervised, distillation students, semi-supervised) initializes
/// through this function, so two methods given the same seed and widths
/// start from bit-identical weights.
pub fn init_classifier(widths: &[usize], seed: u64) -> Result<MlpClassifier> {
    MlpClassifier::init(widths, &mut derive_rng(seed, &["init"]))
}

/// Plain supervised cross-entropy training.
pub fn train_supervised(
    init: &MlpClassifier,
    train: &LabeledDataset,
    val: Option<&LabeledDataset>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(MlpClassifier, TrainLog)> {
    train_with_aux(init, train, val, cfg, seed, None)
}

/// Supervised training with an optional auxiliary objective.
///
/// The shuffle stream is derived from `seed` alone, so two calls with the
/// same seed see identical batch orders regardless of which auxiliary
/// objective (if any) is attached.
pub(crate) fn train_with_aux(
    init: &MlpClassifier,
    train: &LabeledDataset,
    val: Option<&LabeledDataset>,
    cfg: &TrainConfig,
    seed: u64,
    mut aux: Option<&mut dyn AuxObjective>,
) -> Result<(MlpClassifier, TrainLog)> {
    cfg.validate()?;
    if train.n() == 0 {
        return Err(Error::validation("empty training set"));
    }
    if train.dim() != init.input_dim() {
        return Err(Error::shape(format!(
            "training data has {} features, model expects {}",
            train.dim(),
            init.input_dim()
        )));
    }
    if train.num_classes() != init.output_dim() {
        return Err(Error::shape(format!(
            "training data has {} classes, model outputs {}",
            train.num_classes(),
            init.output_dim()
        )));
    }

    let mut model = init.clone();
    let mut opt = Sgd::new(cfg.optimizer.clone(), &model)?;
    let mut shuffle_rng = derive_rng(seed, &["train", "shuffle"]);
    let mut log = TrainLog::default();

    let n = train.n();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        opt.set_schedule_index(epoch);
        order.shuffle(&mut shuffle_rng);

        let mut sup_sum = 0.0;
        let mut aux_sum = 0.0;
        let mut batches = 0usize;

        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let b = chunk.len();
            let mut x = DMatrix::zeros(b, train.dim());
            for (out, &r) in chunk.iter().enumerate() {
                x.row_mut(out).copy_from(&train.features().row(r));
            }

            let cache = model.forward_cached(&x)?;
            let logits = cache.logits();
            let mut dlogits = DMatrix::zeros(b, model.output_dim());
            let mut sup_loss = 0.0;
            for (out, &r) in chunk.iter().enumerate() {
                let row: Vec<f64> = logits.row(out).iter().cloned().collect();
                let (l, g) = cross_entropy_hard(&row, train.labels()[r])?;
                sup_loss += l;
                for (c, gv) in g.iter().enumerate() {
                    dlogits[(out, c)] = *gv;
                }
            }
            sup_loss /= b as f64;

            let logits_snapshot = logits.clone();
            let mut grads = model.backward_from_cache(&cache, &dlogits)?;

            let mut aux_loss = 0.0;
            if let Some(a) = aux.as_deref_mut() {
                let w = a.weight();
                if w != 0.0 {
                    if let Some((al, ag)) = a.step_grad(&model, &x, &logits_snapshot)? {
                        aux_loss = al;
                        grads.add_scaled(&ag, w);
                    }
                }
            }

            let total = sup_loss + aux_loss;
            if !total.is_finite() {
                return Err(Error::Diverged { epoch, step, loss: total });
            }

            opt.step(&mut model, &grads)?;
            sup_sum += sup_loss;
            aux_sum += aux_loss;
            batches += 1;
        }

        let val_accuracy = match val {
            Some(v) => Some(accuracy(&model, v)?),
            None => None,
        };
        log.epochs.push(EpochStats {
            epoch,
            sup_loss: sup_sum / batches as f64,
            aux_loss: aux_sum / batches as f64,
            val_accuracy,
        });
    }

    Ok((model, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::MlpClassifier;
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    /// Two well-separated 2-D blobs: linearly separable.
    fn blobs(n_per: usize, seed: u64) -> LabeledDataset {
        let mut rng = derive_rng(seed, &["train-test-blobs"]);
        let n = 2 * n_per;
        let mut f = DMatrix::zeros(n, 2);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % 2;
            let center = if class == 0 { -3.0 } else { 3.0 };
            f[(i, 0)] = center + rng.sample::<f64, _>(StandardNormal);
            f[(i, 1)] = rng.sample::<f64, _>(StandardNormal);
            labels.push(class);
        }
        LabeledDataset::new(f, labels, "blobs", 2).unwrap()
    }

    fn quick_cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 16,
            optimizer: SgdConfig {
                lr: 0.1,
                momentum: 0.9,
                weight_decay: 1e-4,
                decay_milestones: vec![],
                decay_factor: 1.0,
            },
        }
    }

    #[test]
    fn learns_separable_blobs() {
        let data = blobs(60, 0);
        let init = MlpClassifier::init(&[2, 8, 2], &mut derive_rng(1, &["init"])).unwrap();
        let (model, log) = train_supervised(&init, &data, Some(&data), &quick_cfg(30), 2).unwrap();
        assert!(log.final_val_accuracy().unwrap() > 0.95);
        assert!(accuracy(&model, &data).unwrap() > 0.95);
        // Loss went down substantially.
        assert!(log.epochs.last().unwrap().sup_loss < 0.5 * log.epochs[0].sup_loss);
    }

    #[test]
    fn training_is_bit_deterministic_per_seed() {
        let data = blobs(30, 3);
        let init = MlpClassifier::init(&[2, 8, 2], &mut derive_rng(4, &["init"])).unwrap();
        let (a, _) = train_supervised(&init, &data, None, &quick_cfg(5), 7).unwrap();
        let (b, _) = train_supervised(&init, &data, None, &quick_cfg(5), 7).unwrap();
        assert_eq!(a, b);
        let (c, _) = train_supervised(&init, &data, None, &quick_cfg(5), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rejects_mismatched_model_and_data() {
        let data = blobs(10, 5);
        let wrong_in = MlpClassifier::init(&[3, 4, 2], &mut derive_rng(0, &["i"])).unwrap();
        assert!(train_supervised(&wrong_in, &data, None, &quick_cfg(1), 0).is_err());
        let wrong_out = MlpClassifier::init(&[2, 4, 5], &mut derive_rng(0, &["i"])).unwrap();
        assert!(train_supervised(&wrong_out, &data, None, &quick_cfg(1), 0).is_err());
    }

    #[test]
    fn divergence_is_reported_not_propagated_as_nan() {
        let data = blobs(20, 6);
        let init = MlpClassifier::init(&[2, 8, 2], &mut derive_rng(6, &["init"])).unwrap();
        let mut cfg = quick_cfg(50);
        cfg.optimizer.lr = 1e9; // guaranteed blow-up
        let err = train_supervised(&init, &data, None, &cfg, 0).unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }));
    }

    /// Auxiliary objective that pulls all parameters toward zero (weighted
    /// L2), used to check the aux plumbing end to end.
    struct PullToZero {
        weight: f64,
    }

    impl AuxObjective for PullToZero {
        fn weight(&self) -> f64 {
            self.weight
        }
        fn step_grad(
            &mut self,
            model: &MlpClassifier,
            _x: &DMatrix<f64>,
            _logits: &DMatrix<f64>,
        ) -> Result<Option<(f64, Gradients)>> {
            let mut g = Gradients::zeros_like(model);
            let mut loss = 0.0;
            for (gl, ml) in g.layers.iter_mut().zip(model.layers()) {
                gl.weight.copy_from(&ml.weight);
                gl.bias.copy_from(&ml.bias);
                loss += ml.weight.norm_squared() + ml.bias.norm_squared();
            }
            Ok(Some((0.5 * loss, g)))
        }
    }

    #[test]
    fn zero_weight_aux_is_bit_identical_to_supervised() {
        let data = blobs(30, 7);
        let init = MlpClassifier::init(&[2, 8, 2], &mut derive_rng(8, &["init"])).unwrap();
        let (plain, _) = train_supervised(&init, &data, None, &quick_cfg(5), 11).unwrap();
        let mut aux = PullToZero { weight: 0.0 };
        let (with_aux, _) =
            train_with_aux(&init, &data, None, &quick_cfg(5), 11, Some(&mut aux)).unwrap();
        assert_eq!(plain, with_aux);
    }

    #[test]
    fn active_aux_changes_the_trajectory_and_shrinks_weights() {
        let data = blobs(30, 9);
        let init = MlpClassifier::init(&[2, 8, 2], &mut derive_rng(10, &["init"])).unwrap();
        let (plain, _) = train_supervised(&init, &data, None, &quick_cfg(5), 12).unwrap();
        let mut aux = PullToZero { weight: 0.5 };
        let (with_aux, log) =
            train_with_aux(&init, &data, None, &quick_cfg(5), 12, Some(&mut aux)).unwrap();
        assert_ne!(plain, with_aux);
        assert!(log.epochs[0].aux_loss > 0.0);
        let norm = |m: &MlpClassifier| -> f64 {
            m.layers().iter().map(|l| l.weight.norm_squared()).sum()
        };
        assert!(norm(&with_aux) < norm(&plain));
    }

    #[test]
    fn last_partial_batch_is_not_dropped() {
        // 25 samples, batch 16 → batches of 16 and 9; with batch_size > n
        // training still works on a single batch.
        let data = blobs(13, 13); // n = 26
        let init = MlpClassifier::init(&[2, 4, 2], &mut derive_rng(0, &["i"])).unwrap();
        let mut cfg = quick_cfg(1);
        cfg.batch_size = 16;
        let (_, log) = train_supervised(&init, &data, None, &cfg, 0).unwrap();
        assert_eq!(log.epochs.len(), 1);
        cfg.batch_size = 100;
        assert!(train_supervised(&init, &data, None, &cfg, 0).is_ok());
    }
}
