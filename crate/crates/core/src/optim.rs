//! SGD with Nesterov momentum and a milestone learning-rate schedule.
//!
//! The update uses the "lookahead" form of Nesterov momentum (the one
//! mainstream deep-learning frameworks implement):
//!
//! ```text
//! g ← ∇L(w) + λ_wd · w        (decoupled-style additive weight decay)
//! v ← μ · v + g
//! w ← w − lr · (g + μ · v)
//! ```
//!
//! The learning rate is `lr × factor^(number of milestones reached)`; the
//! scheduler index is set by the caller per epoch (fine-tuning) or per step
//! (pre-training on streamed batches).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{Gradients, MlpClassifier};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Scheduler indices at which the learning rate is multiplied by
    /// `decay_factor` (cumulatively).
    pub decay_milestones: Vec<usize>,
    pub decay_factor: f64,
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::validation(format!("learning rate {} must be ≥ 0", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::validation(format!(
                "momentum {} must lie in [0, 1)",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::validation("weight decay must be ≥ 0".to_string()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::validation(format!(
                "decay factor {} must lie in (0, 1]",
                self.decay_factor
            )));
        }
        Ok(())
    }
}

/// Optimizer state: one velocity buffer per parameter tensor plus the
/// scheduler position.
pub struct Sgd {
    cfg: SgdConfig,
    velocity: Gradients,
    schedule_index: usize,
}

impl Sgd {
    pub fn new(cfg: SgdConfig, model: &MlpClassifier) -> Result<Sgd> {
        cfg.validate()?;
        Ok(Sgd { velocity: Gradients::zeros_like(model), cfg, schedule_index: 0 })
    }

    /// Advance the scheduler (epoch index for fine-tuning, step index for
    /// streamed pre-training).
    pub fn set_schedule_index(&mut self, index: usize) {
        self.schedule_index = index;
    }

    /// Learning rate after all milestones ≤ the current index have fired.
    pub fn effective_lr(&self) -> f64 {
        let fired =
            self.cfg.decay_milestones.iter().filter(|&&m| self.schedule_index >= m).count();
        self.cfg.lr * self.cfg.decay_factor.powi(fired as i32)
    }

    /// One parameter update in place.
    pub fn step(&mut self, model: &mut MlpClassifier, grads: &Gradients) -> Result<()> {
        if grads.layers.len() != self.velocity.layers.len() {
            return Err(Error::shape("gradient/velocity layer count mismatch".to_string()));
        }
        let lr = self.effective_lr();
        let (mu, wd) = (self.cfg.momentum, self.cfg.weight_decay);
        for (l, layer) in model.layers_mut().iter_mut().enumerate() {
            let gl = &grads.layers[l];
            let vl = &mut self.velocity.layers[l];
            if gl.weight.shape() != layer.weight.shape() || gl.bias.len() != layer.bias.len() {
                return Err(Error::shape(format!("gradient shape mismatch at layer {l}")));
            }
            for (w, (g0, v)) in layer.weight.iter_mut().zip(gl.weight.iter().zip(vl.weight.iter_mut())) {
                let g = g0 + wd * *w;
                *v = mu * *v + g;
                *w -= lr * (g + mu * *v);
            }
            for (w, (g0, v)) in layer.bias.iter_mut().zip(gl.bias.iter().zip(vl.bias.iter_mut())) {
                let g = g0 + wd * *w;
                *v = mu * *v + g;
                *w -= lr * (g + mu * *v);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::Layer;
    use nalgebra::{DMatrix, DVector};

    fn scalar_model(w: f64) -> MlpClassifier {
        MlpClassifier::from_layers(vec![Layer {
            weight: DMatrix::from_element(1, 1, w),
            bias: DVector::zeros(1),
        }])
        .unwrap()
    }

    fn scalar_grad(model: &MlpClassifier, g: f64) -> Gradients {
        let mut grads = Gradients::zeros_like(model);
        grads.layers[0].weight[(0, 0)] = g;
        grads
    }

    fn cfg(lr: f64, momentum: f64, wd: f64) -> SgdConfig {
        SgdConfig {
            lr,
            momentum,
            weight_decay: wd,
            decay_milestones: vec![],
            decay_factor: 1.0,
        }
    }

    #[test]
    fn momentum_zero_reduces_to_plain_sgd() {
        let mut model = scalar_model(2.0);
        let mut opt = Sgd::new(cfg(0.5, 0.0, 0.0), &model).unwrap();
        let g = scalar_grad(&model, 3.0);
        opt.step(&mut model, &g).unwrap();
        assert_eq!(model.layers()[0].weight[(0, 0)], 2.0 - 0.5 * 3.0);
    }

    #[test]
    fn zero_gradient_zero_velocity_is_a_fixed_point() {
        let mut model = scalar_model(1.23456789);
        let before = model.clone();
        let mut opt = Sgd::new(cfg(0.1, 0.9, 0.0), &model).unwrap();
        let g = scalar_grad(&model, 0.0);
        opt.step(&mut model, &g).unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn zero_lr_never_moves_parameters() {
        let mut model = scalar_model(-0.75);
        let before = model.clone();
        let mut opt = Sgd::new(cfg(0.0, 0.9, 1e-4), &model).unwrap();
        let g = scalar_grad(&model, 1.0);
        for _ in 0..3 {
            opt.step(&mut model, &g).unwrap();
        }
        assert_eq!(model, before);
    }

    #[test]
    fn three_steps_match_hand_unrolled_recurrence() {
        let (lr, mu) = (0.1, 0.9);
        let mut model = scalar_model(1.0);
        let mut opt = Sgd::new(cfg(lr, mu, 0.0), &model).unwrap();

        // Independent scalar unroll of the same recurrence, same op order.
        let unit = scalar_grad(&model, 1.0);
        let (mut w, mut v) = (1.0f64, 0.0f64);
        for _ in 0..3 {
            let g = 1.0;
            v = mu * v + g;
            w -= lr * (g + mu * v);
            opt.step(&mut model, &unit).unwrap();
        }
        assert_eq!(model.layers()[0].weight[(0, 0)], w);
        // Sanity against a by-hand decimal computation.
        assert!((w - 0.1951).abs() < 1e-12);
        assert!((v - 2.71).abs() < 1e-12);
    }

    #[test]
    fn weight_decay_adds_into_gradient() {
        let (lr, wd) = (0.1, 0.01);
        let mut model = scalar_model(2.0);
        let mut opt = Sgd::new(cfg(lr, 0.0, wd), &model).unwrap();
        let g = scalar_grad(&model, 1.0);
        opt.step(&mut model, &g).unwrap();
        // g = 1 + 0.01·2 = 1.02; w = 2 − 0.1·1.02.
        assert!((model.layers()[0].weight[(0, 0)] - (2.0 - 0.1 * 1.02)).abs() < 1e-15);
    }

    #[test]
    fn schedule_decays_at_milestones() {
        let model = scalar_model(0.0);
        let mut opt = Sgd::new(
            SgdConfig {
                lr: 0.1,
                momentum: 0.0,
                weight_decay: 0.0,
                decay_milestones: vec![30, 60],
                decay_factor: 0.1,
            },
            &model,
        )
        .unwrap();
        assert_eq!(opt.effective_lr(), 0.1);
        opt.set_schedule_index(29);
        assert_eq!(opt.effective_lr(), 0.1);
        opt.set_schedule_index(30);
        assert!((opt.effective_lr() - 0.01).abs() < 1e-15);
        opt.set_schedule_index(60);
        assert!((opt.effective_lr() - 0.001).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let model = scalar_model(0.0);
        assert!(Sgd::new(cfg(-0.1, 0.0, 0.0), &model).is_err());
        assert!(Sgd::new(cfg(0.1, 1.0, 0.0), &model).is_err());
        let mut bad = cfg(0.1, 0.0, 0.0);
        bad.decay_factor = 0.0;
        assert!(Sgd::new(bad, &model).is_err());
    }
}
