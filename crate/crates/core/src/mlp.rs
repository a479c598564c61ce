//! Fully connected ReLU classifier with analytic backprop.
//!
//! Layout conventions used everywhere in this crate:
//!
//! * batches are row-major: `x` is `B × d_in`, logits are `B × K`;
//! * a layer stores `weight` as `d_out × d_in`, so the affine map is
//!   `z = x · Wᵀ + 1·bᵀ`;
//! * gradients returned by [`MlpClassifier::backward`] are for the **batch
//!   mean** of the per-sample losses — the caller supplies per-sample
//!   `∂ℓᵢ/∂logits` rows and the 1/B is folded in here, once.
//!
//! Checkpoints serialize to JSON with flat row-major weight arrays; see
//! [`CheckpointFile`].

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jsonio;

/// One affine layer, `z = x · weightᵀ + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `d_out × d_in`.
    pub weight: DMatrix<f64>,
    /// `d_out`.
    pub bias: DVector<f64>,
}

impl Layer {
    fn zeros_like(other: &Layer) -> Layer {
        Layer {
            weight: DMatrix::zeros(other.weight.nrows(), other.weight.ncols()),
            bias: DVector::zeros(other.bias.len()),
        }
    }
}

/// Parameter-shaped container for gradients (and optimizer velocity).
#[derive(Clone, Debug)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpClassifier) -> Gradients {
        Gradients { layers: model.layers.iter().map(Layer::zeros_like).collect() }
    }

    /// `self += scale · other`. Skips work entirely when `scale == 0` so
    /// that disabling an auxiliary loss leaves updates bit-identical to a
    /// run that never computed it.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        if scale == 0.0 {
            return;
        }
        assert_eq!(self.layers.len(), other.layers.len(), "gradient shape mismatch");
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.zip_apply(&b.weight, |x, y| *x += scale * y);
            a.bias.zip_apply(&b.bias, |x, y| *x += scale * y);
        }
    }
}

/// Multi-layer perceptron: affine layers with ReLU between them and raw
/// logits at the output.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpClassifier {
    layers: Vec<Layer>,
}

/// Intermediate activations kept around for the backward pass.
pub struct ForwardCache {
    /// `inputs[l]` is the input to layer `l` (post-ReLU for `l > 0`).
    inputs: Vec<DMatrix<f64>>,
    /// Pre-activations of each layer; last entry is the logits.
    pre: Vec<DMatrix<f64>>,
}

impl ForwardCache {
    pub fn logits(&self) -> &DMatrix<f64> {
        self.pre.last().expect("cache always has at least one layer")
    }
}

impl MlpClassifier {
    /// He-initialized network. `widths` lists every layer width including
    /// input and output, e.g. `[16, 64, 64, 20]`.
    pub fn init<R: Rng>(widths: &[usize], rng: &mut R) -> Result<MlpClassifier> {
        if widths.len() < 2 {
            return Err(Error::validation("architecture needs at least input and output widths"));
        }
        if widths.contains(&0) {
            return Err(Error::validation("zero-width layer"));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            // Row-major draw order so checkpoints of freshly initialized
            // nets are stable across refactors of the matrix backend.
            let mut weight = DMatrix::zeros(fan_out, fan_in);
            for r in 0..fan_out {
                for c in 0..fan_in {
                    weight[(r, c)] = std * rng.sample::<f64, _>(StandardNormal);
                }
            }
            layers.push(Layer { weight, bias: DVector::zeros(fan_out) });
        }
        Ok(MlpClassifier { layers })
    }

    /// Build from explicit layers, validating that shapes chain.
    pub fn from_layers(layers: Vec<Layer>) -> Result<MlpClassifier> {
        if layers.is_empty() {
            return Err(Error::validation("a classifier needs at least one layer"));
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].weight.ncols() != pair[0].weight.nrows() {
                return Err(Error::shape(format!(
                    "layer {} outputs {} features but layer {} expects {}",
                    l,
                    pair[0].weight.nrows(),
                    l + 1,
                    pair[1].weight.ncols()
                )));
            }
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.bias.len() != layer.weight.nrows() {
                return Err(Error::shape(format!("layer {l} bias/weight row mismatch")));
            }
        }
        Ok(MlpClassifier { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable access for optimizers. Callers must preserve shapes.
    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.nrows()
    }

    /// Full width list including input and output, e.g. `[16, 64, 64, 20]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.weight.nrows()));
        w
    }

    fn check_input(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::shape(format!(
                "input has {} features, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Logits for a batch (`B × d_in` → `B × K`).
    pub fn forward(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.forward_cached(x)?.pre.pop().unwrap())
    }

    /// Forward pass that keeps activations for [`Self::backward_from_cache`].
    pub fn forward_cached(&self, x: &DMatrix<f64>) -> Result<ForwardCache> {
        self.check_input(x)?;
        let b = x.nrows();
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = &a * layer.weight.transpose();
            for r in 0..b {
                for c in 0..z.ncols() {
                    z[(r, c)] += layer.bias[c];
                }
            }
            inputs.push(std::mem::replace(&mut a, DMatrix::zeros(0, 0)));
            if l + 1 < self.layers.len() {
                a = z.map(|v| v.max(0.0));
            }
            pre.push(z);
        }
        Ok(ForwardCache { inputs, pre })
    }

    /// Gradients of the batch-mean loss. `dlogits` holds per-sample
    /// `∂ℓᵢ/∂logits` rows; the 1/B factor is applied here.
    pub fn backward(&self, x: &DMatrix<f64>, dlogits: &DMatrix<f64>) -> Result<Gradients> {
        let cache = self.forward_cached(x)?;
        self.backward_from_cache(&cache, dlogits)
    }

    /// Backward pass reusing a cache from [`Self::forward_cached`].
    pub fn backward_from_cache(
        &self,
        cache: &ForwardCache,
        dlogits: &DMatrix<f64>,
    ) -> Result<Gradients> {
        let b = cache.inputs[0].nrows();
        let k = self.output_dim();
        if dlogits.nrows() != b || dlogits.ncols() != k {
            return Err(Error::shape(format!(
                "dlogits is {}x{}, expected {}x{}",
                dlogits.nrows(),
                dlogits.ncols(),
                b,
                k
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        // Mean over the batch happens exactly once, here.
        let mut dz = dlogits / (b as f64);
        for l in (0..self.layers.len()).rev() {
            grads.layers[l].weight = dz.transpose() * &cache.inputs[l];
            for c in 0..dz.ncols() {
                grads.layers[l].bias[c] = dz.column(c).sum();
            }
            if l > 0 {
                let mut da = &dz * &self.layers[l].weight;
                // ReLU mask from the pre-activations of the previous layer.
                let z_prev = &cache.pre[l - 1];
                for r in 0..da.nrows() {
                    for c in 0..da.ncols() {
                        if z_prev[(r, c)] <= 0.0 {
                            da[(r, c)] = 0.0;
                        }
                    }
                }
                dz = da;
            }
        }
        Ok(grads)
    }

    /// Predicted class per row: argmax of logits, ties to the lowest index.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        let logits = self.forward(x)?;
        Ok((0..logits.nrows())
            .map(|r| {
                let row = logits.row(r);
                let mut best = 0;
                for c in 1..row.ncols() {
                    if row[c] > row[best] {
                        best = c;
                    }
                }
                best
            })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        jsonio::save_json(path, &CheckpointFile::from(self))
    }

    pub fn load(path: &Path) -> Result<MlpClassifier> {
        let file: CheckpointFile = jsonio::load_json(path)?;
        file.into_classifier().map_err(|e| Error::Artifact {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }
}

/// On-disk checkpoint: width list, per-layer flat row-major weights and
/// biases, and the output dimension (redundant with `arch`, kept as a
/// cheap integrity check).
#[derive(Serialize, Deserialize, Debug)]
pub struct CheckpointFile {
    pub arch: Vec<usize>,
    pub layers: Vec<CheckpointLayer>,
    pub output_dim: usize,
}

#[derive(Serialize, Deserialize, Debug)]
pub struct CheckpointLayer {
    /// Flat row-major `d_out × d_in` weights.
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl From<&MlpClassifier> for CheckpointFile {
    fn from(model: &MlpClassifier) -> CheckpointFile {
        let layers = model
            .layers
            .iter()
            .map(|layer| {
                let mut w = Vec::with_capacity(layer.weight.len());
                for r in 0..layer.weight.nrows() {
                    for c in 0..layer.weight.ncols() {
                        w.push(layer.weight[(r, c)]);
                    }
                }
                CheckpointLayer { w, b: layer.bias.iter().cloned().collect() }
            })
            .collect();
        CheckpointFile { arch: model.widths(), layers, output_dim: model.output_dim() }
    }
}

impl CheckpointFile {
    pub fn into_classifier(self) -> Result<MlpClassifier> {
        if self.arch.len() < 2 || self.layers.len() != self.arch.len() - 1 {
            return Err(Error::validation(format!(
                "checkpoint lists {} layers for arch of {} widths",
                self.layers.len(),
                self.arch.len()
            )));
        }
        if self.output_dim != *self.arch.last().unwrap() {
            return Err(Error::validation(format!(
                "output_dim {} does not match final arch width {}",
                self.output_dim,
                self.arch.last().unwrap()
            )));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, cl) in self.layers.into_iter().enumerate() {
            let (d_in, d_out) = (self.arch[l], self.arch[l + 1]);
            if cl.w.len() != d_in * d_out || cl.b.len() != d_out {
                return Err(Error::validation(format!(
                    "layer {l} has {} weights and {} biases, expected {}x{}",
                    cl.w.len(),
                    cl.b.len(),
                    d_out,
                    d_in
                )));
            }
            if cl.w.iter().chain(cl.b.iter()).any(|v| !v.is_finite()) {
                return Err(Error::validation(format!("layer {l} contains non-finite values")));
            }
            let weight = DMatrix::from_row_slice(d_out, d_in, &cl.w);
            layers.push(Layer { weight, bias: DVector::from_vec(cl.b) });
        }
        MlpClassifier::from_layers(layers)
    }
}
