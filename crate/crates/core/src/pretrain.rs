//! Pseudo pre-training: fit a network on generator samples before it ever
//! sees a real target example.
//!
//! Four ways of choosing what the generator emits:
//!
//! * `Uniform` — class labels drawn uniformly, a fresh batch every step;
//! * `Filtered` — uniform over a subset of source classes (typically the
//!   confidently-predicted ones);
//! * `Pcs` — cycle through pseudo conditional labels, so the synthetic
//!   stream leans toward the target's corner of the source manifold;
//! * `Offline` — materialize a fixed uniform pool up front and cycle over
//!   it without reshuffling. With the pool sized at `steps × batch` this
//!   replays the `Uniform` stream bit for bit; the (smaller) default pool
//!   makes the network revisit the same samples many times, which is the
//!   failure mode the online strategies exist to avoid.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{ConditionalGenerator, ConditioningMode};
use crate::labelfn::LabelDistribution;
use crate::loss::cross_entropy_soft;
use crate::mlp::MlpClassifier;
use crate::optim::{Sgd, SgdConfig};
use crate::pcs::PseudoLabelSet;
use crate::rng::derive_rng;

/// Default size of the `Offline` pool: 20 batches' worth, far below the
/// `steps × batch` stream an online strategy consumes, so offline runs
/// genuinely recycle samples.
pub const OFFLINE_DEFAULT_SIZE: usize = 1280;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    /// Milestones are in optimizer steps, not epochs.
    pub optimizer: SgdConfig,
    /// Pool size for the `Offline` strategy; `None` uses
    /// [`OFFLINE_DEFAULT_SIZE`].
    pub offline_size: Option<usize>,
}

impl PretrainConfig {
    /// Desk-scale default: 2000 steps of batch 64, lr 0.1 decayed ×0.1 at
    /// step 1200.
    pub fn desk_default() -> PretrainConfig {
        PretrainConfig {
            steps: 2000,
            batch_size: 64,
            optimizer: SgdConfig {
                lr: 0.1,
                momentum: 0.9,
                weight_decay: 1e-4,
                decay_milestones: vec![1200],
                decay_factor: 0.1,
            },
            offline_size: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::validation("pre-training batch size must be ≥ 1"));
        }
        if self.offline_size == Some(0) {
            return Err(Error::validation("offline pool size must be ≥ 1"));
        }
        self.optimizer.validate()
    }
}

/// How labels are chosen for the generator during pre-training.
#[derive(Clone, Debug)]
pub enum PretrainStrategy {
    Uniform,
    Filtered(BTreeSet<usize>),
    Pcs(PseudoLabelSet),
    Offline,
}

impl PretrainStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            PretrainStrategy::Uniform => "uniform",
            PretrainStrategy::Filtered(_) => "filtered",
            PretrainStrategy::Pcs(_) => "pcs",
            PretrainStrategy::Offline => "offline",
        }
    }

    fn validate(&self, gen: &ConditionalGenerator) -> Result<()> {
        match self {
            PretrainStrategy::Uniform | PretrainStrategy::Offline => Ok(()),
            PretrainStrategy::Filtered(classes) => {
                if classes.is_empty() {
                    return Err(Error::validation("filtered class set is empty"));
                }
                if let Some(&bad) = classes.iter().find(|&&c| c >= gen.num_classes()) {
                    return Err(Error::validation(format!(
                        "filtered class {bad} outside the generator's {} classes",
                        gen.num_classes()
                    )));
                }
                Ok(())
            }
            PretrainStrategy::Pcs(labels) => {
                if labels.num_classes() != gen.num_classes() {
                    return Err(Error::shape(format!(
                        "pseudo labels cover {} classes, generator has {}",
                        labels.num_classes(),
                        gen.num_classes()
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Pre-train `[gen.dim(), hidden.., gen.num_classes()]` on generator
/// output. Returns the trained network (source-space head still attached)
/// and the per-step training losses.
///
/// Two streams are derived from `seed`: `"pp"/"init"` for the weights and
/// `"pp"/"gen"` for everything the strategy draws (class picks and sample
/// noise, consumed strictly in sample order). An `Offline` run whose pool
/// is exactly `steps × batch_size` therefore consumes the generator stream
/// in the same order as `Uniform` and reproduces its updates bit for bit.
pub fn pseudo_pretrain(
    hidden: &[usize],
    gen: &ConditionalGenerator,
    cfg: &PretrainConfig,
    strategy: &PretrainStrategy,
    seed: u64,
) -> Result<(MlpClassifier, Vec<f64>)> {
    cfg.validate()?;
    strategy.validate(gen)?;

    let k = gen.num_classes();
    let mut widths = Vec::with_capacity(hidden.len() + 2);
    widths.push(gen.dim());
    widths.extend_from_slice(hidden);
    widths.push(k);
    let mut model = MlpClassifier::init(&widths, &mut derive_rng(seed, &["pp", "init"]))?;
    if cfg.steps == 0 {
        return Ok((model, Vec::new()));
    }

    let mut opt = Sgd::new(cfg.optimizer.clone(), &model)?;
    let mut gen_rng = derive_rng(seed, &["pp", "gen"]);
    let mut losses = Vec::with_capacity(cfg.steps);

    let b = cfg.batch_size;
    let d = gen.dim();
    let mut x = DMatrix::zeros(b, d);
    let mut t = DMatrix::zeros(b, k);

    let mut sampler = BatchSampler::new(gen, strategy)?;
    let offline_pool = match strategy {
        PretrainStrategy::Offline => {
            let size = cfg.offline_size.unwrap_or(OFFLINE_DEFAULT_SIZE);
            Some(sampler.materialize(size, &mut gen_rng)?)
        }
        _ => None,
    };

    for step in 0..cfg.steps {
        opt.set_schedule_index(step);
        match &offline_pool {
            Some((pool_x, pool_t)) => {
                let size = pool_x.nrows();
                for row in 0..b {
                    let src = (step * b + row) % size;
                    x.row_mut(row).copy_from(&pool_x.row(src));
                    t.row_mut(row).copy_from(&pool_t.row(src));
                }
            }
            None => sampler.fill(&mut x, &mut t, &mut gen_rng)?,
        }

        let cache = model.forward_cached(&x)?;
        let logits = cache.logits();
        let mut dlogits = DMatrix::zeros(b, k);
        let mut loss_sum = 0.0;
        for row in 0..b {
            let logit_row: Vec<f64> = logits.row(row).iter().copied().collect();
            let target_row: Vec<f64> = t.row(row).iter().copied().collect();
            let (loss, grad) = cross_entropy_soft(&logit_row, &target_row)?;
            loss_sum += loss;
            for c in 0..k {
                dlogits[(row, c)] = grad[c];
            }
        }
        let mean_loss = loss_sum / b as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Diverged { epoch: 0, step, loss: mean_loss });
        }
        losses.push(mean_loss);

        let grads = model.backward_from_cache(&cache, &dlogits)?;
        opt.step(&mut model, &grads)?;
    }
    Ok((model, losses))
}

/// Replace the network's final affine layer with a freshly drawn
/// `new_classes`-way head (weights `init_scale · N(0,1)` in row-major draw
/// order, zero bias). Every other layer is copied bit for bit, so the
/// feature extractor is untouched.
pub fn swap_final_layer<R: Rng>(
    model: &MlpClassifier,
    new_classes: usize,
    init_scale: f64,
    rng: &mut R,
) -> Result<MlpClassifier> {
    if new_classes < 2 {
        return Err(Error::validation("new head needs at least two classes"));
    }
    if !init_scale.is_finite() || init_scale < 0.0 {
        return Err(Error::validation("head init scale must be finite and ≥ 0"));
    }
    let mut layers = model.layers().to_vec();
    let last = layers.last_mut().expect("a classifier always has layers");
    let fan_in = last.weight.ncols();
    let mut weight = DMatrix::zeros(new_classes, fan_in);
    for r in 0..new_classes {
        for c in 0..fan_in {
            weight[(r, c)] = init_scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
    *last = Layer { weight, bias: DVector::zeros(new_classes) };
    MlpClassifier::from_layers(layers)
}

use crate::mlp::Layer;

/// Draws (sample, soft target) rows for one pre-training step.
///
/// Per-sample draw order is part of the replay contract: first whatever the
/// label choice consumes (one uniform for class-set strategies, one uniform
/// for mixture-mode conditional draws, nothing for interpolate-mode pseudo
/// labels), then `dim` standard normals for the sample itself.
struct BatchSampler<'a> {
    gen: &'a ConditionalGenerator,
    kind: SamplerKind,
    /// Cycle position for the `Pcs` strategy; persists across batches.
    pos: usize,
}

enum SamplerKind {
    /// Uniform over this class list (all classes, or the filtered subset).
    ClassSet { classes: Vec<usize>, transforms: Vec<(DVector<f64>, DMatrix<f64>)> },
    /// Cycle through pseudo labels; transforms are precomputed for
    /// interpolate-mode generators and resolved per draw for mixtures.
    Cycle {
        labels: Vec<LabelDistribution>,
        transforms: Option<Vec<(DVector<f64>, DMatrix<f64>)>>,
    },
}

impl<'a> BatchSampler<'a> {
    fn new(gen: &'a ConditionalGenerator, strategy: &PretrainStrategy) -> Result<BatchSampler<'a>> {
        let k = gen.num_classes();
        let one_hot_transform = |c: usize| {
            let y = LabelDistribution::one_hot(c, k, "pretrain")?;
            gen.interpolate_transform(&y)
        };
        let kind = match strategy {
            PretrainStrategy::Uniform | PretrainStrategy::Offline => {
                let classes: Vec<usize> = (0..k).collect();
                let transforms =
                    classes.iter().map(|&c| one_hot_transform(c)).collect::<Result<_>>()?;
                SamplerKind::ClassSet { classes, transforms }
            }
            PretrainStrategy::Filtered(set) => {
                let classes: Vec<usize> = set.iter().copied().collect();
                let transforms =
                    classes.iter().map(|&c| one_hot_transform(c)).collect::<Result<_>>()?;
                SamplerKind::ClassSet { classes, transforms }
            }
            PretrainStrategy::Pcs(labels) => {
                let transforms = match gen.mode() {
                    ConditioningMode::Interpolate => Some(
                        labels
                            .labels()
                            .iter()
                            .map(|y| gen.interpolate_transform(y))
                            .collect::<Result<Vec<_>>>()?,
                    ),
                    ConditioningMode::Mixture => None,
                };
                SamplerKind::Cycle { labels: labels.labels().to_vec(), transforms }
            }
        };
        Ok(BatchSampler { gen, kind, pos: 0 })
    }

    fn fill<R: Rng>(&mut self, x: &mut DMatrix<f64>, t: &mut DMatrix<f64>, rng: &mut R) -> Result<()> {
        let d = self.gen.dim();
        for row in 0..x.nrows() {
            t.row_mut(row).fill(0.0);
            match &self.kind {
                SamplerKind::ClassSet { classes, transforms } => {
                    let pick = rng.random_range(0..classes.len());
                    t[(row, classes[pick])] = 1.0;
                    let (mean, sqrt) = &transforms[pick];
                    fill_from_transform(x, row, mean, sqrt, rng);
                }
                SamplerKind::Cycle { labels, transforms } => {
                    let j = self.pos % labels.len();
                    self.pos += 1;
                    for (c, &p) in labels[j].probs().iter().enumerate() {
                        t[(row, c)] = p;
                    }
                    match transforms {
                        Some(ts) => {
                            let (mean, sqrt) = &ts[j];
                            fill_from_transform(x, row, mean, sqrt, rng);
                        }
                        None => {
                            let draw = self.gen.sample(&labels[j], 1, rng)?;
                            x.row_mut(row).copy_from(&draw.row(0));
                        }
                    }
                }
            }
            debug_assert_eq!(x.ncols(), d);
        }
        Ok(())
    }

    /// Materialize `size` (sample, target) rows in stream order.
    fn materialize<R: Rng>(
        &mut self,
        size: usize,
        rng: &mut R,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let mut x = DMatrix::zeros(size, self.gen.dim());
        let mut t = DMatrix::zeros(size, self.gen.num_classes());
        self.fill(&mut x, &mut t, rng)?;
        Ok((x, t))
    }
}

fn fill_from_transform<R: Rng>(
    x: &mut DMatrix<f64>,
    row: usize,
    mean: &DVector<f64>,
    sqrt: &DMatrix<f64>,
    rng: &mut R,
) {
    let d = mean.len();
    let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sample = mean + sqrt * z;
    for c in 0..d {
        x[(row, c)] = sample[c];
    }
}
