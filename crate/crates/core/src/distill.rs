//! Knowledge distillation baselines: compress a fine-tuned teacher into a
//! fresh student by penalizing disagreement on the training inputs.
//!
//! Two flavors of the penalty, both detached from the teacher (its
//! parameters never receive gradients):
//!
//! * logit matching — mean squared error between the raw logit vectors;
//! * soft targets — `T²·KL(softmax(t/T) ‖ softmax(s/T))`, the classic
//!   temperature-smoothed form (the `T²` keeps gradient magnitudes
//!   comparable across temperatures).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::str::FromStr;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::loss::{log_softmax, softmax};
use crate::mlp::{Gradients, MlpClassifier};
use crate::pretrain::swap_final_layer;
use crate::rng::derive_rng;
use crate::train::{init_classifier, train_supervised, train_with_aux, AuxObjective, TrainConfig, TrainLog};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KdMethod {
    LogitMatching,
    SoftTarget,
}

impl KdMethod {
    pub fn name(&self) -> &'static str {
        match self {
            KdMethod::LogitMatching => "logit_matching",
            KdMethod::SoftTarget => "soft_target",
        }
    }
}

impl FromStr for KdMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<KdMethod> {
        match s {
            "logit_matching" => Ok(KdMethod::LogitMatching),
            "soft_target" => Ok(KdMethod::SoftTarget),
            other => Err(Error::validation(format!(
                "unknown distillation method {other:?} (expected logit_matching or soft_target)"
            ))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct KdHyper {
    /// Weight of the distillation term next to the supervised loss; 0
    /// disables distillation entirely.
    pub lambda: f64,
    /// Softening temperature for the soft-target method.
    pub temperature: f64,
}

impl KdHyper {
    pub fn desk_default() -> KdHyper {
        KdHyper { lambda: 1.0, temperature: 4.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::validation("distillation weight must be finite and ≥ 0"));
        }
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(Error::validation("distillation temperature must be > 0"));
        }
        Ok(())
    }
}

/// Per-sample distillation loss and its gradient w.r.t. the student logits.
/// The teacher logits are constants.
pub fn kd_loss_grad(
    method: KdMethod,
    student: &[f64],
    teacher: &[f64],
    temperature: f64,
) -> Result<(f64, Vec<f64>)> {
    if student.len() != teacher.len() {
        return Err(Error::shape(format!(
            "student emits {} logits, teacher {}",
            student.len(),
            teacher.len()
        )));
    }
    if student.is_empty() {
        return Err(Error::validation("empty logit vectors"));
    }
    let k = student.len() as f64;
    match method {
        KdMethod::LogitMatching => {
            let loss = student
                .iter()
                .zip(teacher)
                .map(|(s, t)| (s - t).powi(2))
                .sum::<f64>()
                / k;
            let grad = student.iter().zip(teacher).map(|(s, t)| 2.0 * (s - t) / k).collect();
            Ok((loss, grad))
        }
        KdMethod::SoftTarget => {
            let t_scaled: Vec<f64> = teacher.iter().map(|&z| z / temperature).collect();
            let s_scaled: Vec<f64> = student.iter().map(|&z| z / temperature).collect();
            let q_t = softmax(&t_scaled);
            let log_q_t = log_softmax(&t_scaled);
            let log_q_s = log_softmax(&s_scaled);
            let q_s = softmax(&s_scaled);
            let t2 = temperature * temperature;
            let loss = t2
                * q_t
                    .iter()
                    .zip(log_q_t.iter().zip(&log_q_s))
                    .map(|(&q, (lt, ls))| if q > 0.0 { q * (lt - ls) } else { 0.0 })
                    .sum::<f64>();
            // d/ds of T²·KL(q_t ‖ softmax(s/T)) = T·(softmax(s/T) − q_t).
            let grad = q_s
                .iter()
                .zip(&q_t)
                .map(|(&qs, &qt)| temperature * (qs - qt))
                .collect();
            Ok((loss, grad))
        }
    }
}

/// Fine-tune the source classifier on the target task: swap its head for a
/// fresh `train.num_classes()`-way layer and run supervised training. The
/// result serves as the distillation teacher (and as a baseline by itself).
pub fn finetune_teacher(
    source_classifier: &MlpClassifier,
    train: &LabeledDataset,
    val: Option<&LabeledDataset>,
    head_scale: f64,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(MlpClassifier, TrainLog)> {
    let swapped = swap_final_layer(
        source_classifier,
        train.num_classes(),
        head_scale,
        &mut derive_rng(seed, &["teacher-head"]),
    )?;
    train_supervised(&swapped, train, val, cfg, seed)
}

struct KdAux<'a> {
    teacher: &'a MlpClassifier,
    method: KdMethod,
    hyper: &'a KdHyper,
}

impl AuxObjective for KdAux<'_> {
    fn weight(&self) -> f64 {
        self.hyper.lambda
    }

    fn step_grad(
        &mut self,
        model: &MlpClassifier,
        batch_x: &DMatrix<f64>,
        batch_logits: &DMatrix<f64>,
    ) -> Result<Option<(f64, Gradients)>> {
        let b = batch_x.nrows();
        let k = model.output_dim();
        let teacher_logits = self.teacher.forward(batch_x)?;
        let mut dlogits = DMatrix::zeros(b, k);
        let mut loss_sum = 0.0;
        for r in 0..b {
            let s: Vec<f64> = batch_logits.row(r).iter().copied().collect();
            let t: Vec<f64> = teacher_logits.row(r).iter().copied().collect();
            let (loss, grad) = kd_loss_grad(self.method, &s, &t, self.hyper.temperature)?;
            loss_sum += loss;
            for c in 0..k {
                dlogits[(r, c)] = grad[c];
            }
        }
        let grads = model.backward(batch_x, &dlogits)?;
        Ok(Some((loss_sum / b as f64, grads)))
    }
}

/// Train a fresh student of architecture `[dim, hidden.., classes]` with
/// cross-entropy plus the distillation penalty against a fixed teacher.
///
/// The student's init stream matches [`init_classifier`] with the same
/// seed, so a run with `hyper.lambda == 0` is bit-identical to training
/// from scratch.
#[allow(clippy::too_many_arguments)]
pub fn kd_train(
    student_hidden: &[usize],
    teacher: &MlpClassifier,
    train: &LabeledDataset,
    val: Option<&LabeledDataset>,
    method: KdMethod,
    hyper: &KdHyper,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(MlpClassifier, TrainLog)> {
    hyper.validate()?;
    if teacher.input_dim() != train.dim() {
        return Err(Error::shape(format!(
            "teacher expects {} features, data has {}",
            teacher.input_dim(),
            train.dim()
        )));
    }
    if teacher.output_dim() != train.num_classes() {
        return Err(Error::shape(format!(
            "teacher emits {} classes, data has {}; fine-tune the teacher first",
            teacher.output_dim(),
            train.num_classes()
        )));
    }
    let mut widths = Vec::with_capacity(student_hidden.len() + 2);
    widths.push(train.dim());
    widths.extend_from_slice(student_hidden);
    widths.push(train.num_classes());
    let init = init_classifier(&widths, seed)?;
    let mut aux = KdAux { teacher, method, hyper };
    train_with_aux(&init, train, val, cfg, seed, Some(&mut aux))
}
