//! Label functions: mappings from classifier logits to distributions over
//! the source label space.
//!
//! These are the `g` in pseudo conditional sampling — given the source
//! classifier's logits on a *target* sample, they decide what mixture of
//! source classes the generator should be asked for. The interesting design
//! axis is soft vs. hard vs. sparse:
//!
//! * [`softmax_label`] / [`temp_softmax_label`] keep the full distribution
//!   (temperature sharpens or flattens it);
//! * [`argmax_label`] commits to a single source class;
//! * [`sparsemax_label`] is the Euclidean projection of the logits onto the
//!   simplex — soft where the logits are ambiguous, exactly zero elsewhere;
//! * [`classwise_mean`] replaces each sample's distribution with the mean
//!   over its target class, trading per-sample detail for stability;
//! * [`random_label`] is the sanity-check control: labels with no
//!   relationship to the input at all.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::softmax;

/// How far the probabilities of a [`LabelDistribution`] may drift from
/// summing to exactly 1.
const SIMPLEX_TOL: f64 = 1e-9;

/// A probability vector over a named label space.
///
/// Construction validates the simplex constraints; the probabilities are
/// stored exactly as given (no renormalization), so one-hot vectors and
/// sparsemax outputs keep their exact zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LabelDistributionRaw")]
pub struct LabelDistribution {
    probs: Vec<f64>,
    space: String,
}

#[derive(Deserialize)]
struct LabelDistributionRaw {
    probs: Vec<f64>,
    space: String,
}

impl TryFrom<LabelDistributionRaw> for LabelDistribution {
    type Error = Error;
    fn try_from(raw: LabelDistributionRaw) -> Result<LabelDistribution> {
        LabelDistribution::new(raw.probs, raw.space)
    }
}

impl LabelDistribution {
    pub fn new(probs: Vec<f64>, space: impl Into<String>) -> Result<LabelDistribution> {
        if probs.is_empty() {
            return Err(Error::validation("empty probability vector"));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::validation("probabilities must be finite and non-negative"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::validation(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(LabelDistribution { probs, space: space.into() })
    }

    pub fn one_hot(class: usize, k: usize, space: impl Into<String>) -> Result<LabelDistribution> {
        if class >= k {
            return Err(Error::validation(format!("class {class} out of range for {k} classes")));
        }
        let mut probs = vec![0.0; k];
        probs[class] = 1.0;
        Ok(LabelDistribution { probs, space: space.into() })
    }

    pub fn uniform(k: usize, space: impl Into<String>) -> Result<LabelDistribution> {
        if k == 0 {
            return Err(Error::validation("label space must be non-empty"));
        }
        Ok(LabelDistribution { probs: vec![1.0 / k as f64; k], space: space.into() })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn space(&self) -> &str {
        &self.space
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Index of the largest probability, ties to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for i in 1..self.probs.len() {
            if self.probs[i] > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Label-function selection, as it appears in experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelFn {
    Softmax,
    TempSoftmax { tau: f64 },
    Argmax,
    Sparsemax,
    ClasswiseMean,
    Random,
}

impl LabelFn {
    /// Stable name used in CLI flags and output tables.
    pub fn name(&self) -> &'static str {
        match self {
            LabelFn::Softmax => "softmax",
            LabelFn::TempSoftmax { .. } => "temp_softmax",
            LabelFn::Argmax => "argmax",
            LabelFn::Sparsemax => "sparsemax",
            LabelFn::ClasswiseMean => "classwise_mean",
            LabelFn::Random => "random",
        }
    }
}

impl FromStr for LabelFn {
    type Err = Error;

    /// Parses `softmax`, `argmax`, `sparsemax`, `classwise_mean`, `random`,
    /// or `temp_softmax:<tau>`.
    fn from_str(s: &str) -> Result<LabelFn> {
        match s {
            "softmax" => Ok(LabelFn::Softmax),
            "argmax" => Ok(LabelFn::Argmax),
            "sparsemax" => Ok(LabelFn::Sparsemax),
            "classwise_mean" => Ok(LabelFn::ClasswiseMean),
            "random" => Ok(LabelFn::Random),
            other => {
                if let Some(tau) = other.strip_prefix("temp_softmax:") {
                    let tau: f64 = tau
                        .parse()
                        .map_err(|_| Error::validation(format!("bad temperature in {other:?}")))?;
                    if tau <= 0.0 {
                        return Err(Error::validation("temperature must be > 0"));
                    }
                    Ok(LabelFn::TempSoftmax { tau })
                } else {
                    Err(Error::validation(format!(
                        "unknown label function {other:?} (expected softmax, temp_softmax:<tau>, \
                         argmax, sparsemax, classwise_mean, or random)"
                    )))
                }
            }
        }
    }
}

pub fn softmax_label(logits: &[f64], space: &str) -> Result<LabelDistribution> {
    LabelDistribution::new(softmax(logits), space)
}

/// Softmax of `logits / tau`; `tau < 1` sharpens, `tau > 1` flattens.
pub fn temp_softmax_label(logits: &[f64], tau: f64, space: &str) -> Result<LabelDistribution> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::validation(format!("temperature {tau} must be > 0")));
    }
    let scaled: Vec<f64> = logits.iter().map(|z| z / tau).collect();
    LabelDistribution::new(softmax(&scaled), space)
}

/// One-hot at the argmax (ties to the lowest index).
pub fn argmax_label(logits: &[f64], space: &str) -> Result<LabelDistribution> {
    if logits.is_empty() {
        return Err(Error::validation("empty logits"));
    }
    let mut best = 0;
    for i in 1..logits.len() {
        if logits[i] > logits[best] {
            best = i;
        }
    }
    LabelDistribution::one_hot(best, logits.len(), space)
}

/// Euclidean projection of the logits onto the probability simplex
/// (sparsemax), by the sort-and-threshold method:
///
/// ```text
/// sort z descending; k* = max{ k : 1 + k·z₍ₖ₎ > Σ_{j≤k} z₍ⱼ₎ }
/// τ = (Σ_{j≤k*} z₍ⱼ₎ − 1) / k*;    pᵢ = max(zᵢ − τ, 0)
/// ```
pub fn sparsemax_label(logits: &[f64], space: &str) -> Result<LabelDistribution> {
    if logits.is_empty() {
        return Err(Error::validation("empty logits"));
    }
    if logits.iter().any(|z| !z.is_finite()) {
        return Err(Error::validation("logits must be finite"));
    }
    let mut sorted = logits.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());

    let mut cum = 0.0;
    let mut k_star = 0;
    let mut cum_at_k = 0.0;
    for (k, &z) in sorted.iter().enumerate() {
        cum += z;
        if 1.0 + (k + 1) as f64 * z > cum {
            k_star = k + 1;
            cum_at_k = cum;
        }
    }
    // k = 1 always satisfies 1 + z₍₁₎ > z₍₁₎, so k_star ≥ 1.
    let tau = (cum_at_k - 1.0) / k_star as f64;
    let probs: Vec<f64> = logits.iter().map(|z| (z - tau).max(0.0)).collect();

    // The threshold construction sums to 1 up to rounding; the constructor
    // enforces the tolerance.
    LabelDistribution::new(probs, space)
}

/// A one-hot label at a uniformly random class — deliberately unrelated to
/// any input, used as the negative control for conditional sampling.
pub fn random_label<R: Rng>(k: usize, space: &str, rng: &mut R) -> Result<LabelDistribution> {
    if k == 0 {
        return Err(Error::validation("label space must be non-empty"));
    }
    LabelDistribution::one_hot(rng.random_range(0..k), k, space)
}

/// Replace each sample's distribution by the mean over all samples sharing
/// its target class. Returns the per-class means keyed by target class.
pub fn classwise_mean(
    labels: &[LabelDistribution],
    classes: &[usize],
) -> Result<BTreeMap<usize, LabelDistribution>> {
    if labels.len() != classes.len() {
        return Err(Error::shape(format!(
            "{} label distributions vs {} class assignments",
            labels.len(),
            classes.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::validation("cannot average zero label distributions"));
    }
    let k = labels[0].num_classes();
    let space = labels[0].space().to_string();
    for l in labels {
        if l.num_classes() != k || l.space() != space {
            return Err(Error::shape("label distributions disagree on label space".to_string()));
        }
    }

    let mut sums: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (label, &class) in labels.iter().zip(classes) {
        let entry = sums.entry(class).or_insert_with(|| (vec![0.0; k], 0));
        for (acc, p) in entry.0.iter_mut().zip(label.probs()) {
            *acc += p;
        }
        entry.1 += 1;
    }

    let mut means = BTreeMap::new();
    for (class, (sum, count)) in sums {
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        means.insert(class, LabelDistribution::new(mean, space.clone())?);
    }
    Ok(means)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn sparsemax_worked_example() {
        // For [1.0, 0.5, −1.0]: support {1, 2}, τ = 0.25 → (0.75, 0.25, 0).
        let p = sparsemax_label(&[1.0, 0.5, -1.0], "s").unwrap();
        assert_abs_diff_eq!(p.probs()[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(p.probs()[1], 0.25, epsilon = 1e-12);
        assert_eq!(p.probs()[2], 0.0);
    }

    #[test]
    fn sparsemax_of_uniform_logits_is_uniform() {
        let p = sparsemax_label(&[0.3; 5], "s").unwrap();
        for &v in p.probs() {
            assert_abs_diff_eq!(v, 0.2, epsilon = 1e-12);
        }
    }

    #[test]
    fn sparsemax_saturates_to_one_hot() {
        let p = sparsemax_label(&[10.0, 0.0, -3.0], "s").unwrap();
        assert_eq!(p.probs(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn sparsemax_single_class() {
        let p = sparsemax_label(&[-7.3], "s").unwrap();
        assert_abs_diff_eq!(p.probs()[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn softmax_label_worked_example() {
        // [ln 2, 0] → (2/(2+1), 1/(2+1)) = (2/3, 1/3).
        let p = softmax_label(&[(2.0f64).ln(), 0.0], "s").unwrap();
        assert_abs_diff_eq!(p.probs()[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(p.probs()[1], 1.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn temp_softmax_worked_example() {
        // Two classes collapse to a logistic: [1, 0] at τ = 0.4 gives
        // p₀ = 1/(1 + e^{−1/0.4}) = σ(2.5).
        let p = temp_softmax_label(&[1.0, 0.0], 0.4, "s").unwrap();
        let sigma = 1.0 / (1.0 + (-2.5f64).exp());
        assert_abs_diff_eq!(p.probs()[0], sigma, epsilon = 1e-14);
        assert_abs_diff_eq!(p.probs()[1], 1.0 - sigma, epsilon = 1e-14);
    }

    #[test]
    fn temp_softmax_recovers_softmax_at_tau_one() {
        let z = [0.2, -1.5, 0.9];
        let a = temp_softmax_label(&z, 1.0, "s").unwrap();
        let b = softmax_label(&z, "s").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn temp_softmax_sharpens_below_one() {
        let z = [1.0, 0.0];
        let sharp = temp_softmax_label(&z, 0.25, "s").unwrap();
        let soft = temp_softmax_label(&z, 4.0, "s").unwrap();
        assert!(sharp.max_prob() > soft.max_prob());
    }

    #[test]
    fn argmax_breaks_ties_toward_lowest_index() {
        let p = argmax_label(&[2.0, 2.0, 1.0], "s").unwrap();
        assert_eq!(p.probs(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn random_label_is_deterministic_per_stream_and_covers_classes() {
        let mut rng = derive_rng(3, &["labelfn"]);
        let mut seen = [false; 4];
        for _ in 0..200 {
            let l = random_label(4, "s", &mut rng).unwrap();
            seen[l.argmax()] = true;
        }
        assert!(seen.iter().all(|&s| s));

        let mut a = derive_rng(9, &["labelfn"]);
        let mut b = derive_rng(9, &["labelfn"]);
        for _ in 0..32 {
            assert_eq!(
                random_label(7, "s", &mut a).unwrap(),
                random_label(7, "s", &mut b).unwrap()
            );
        }
    }

    #[test]
    fn classwise_mean_averages_within_class() {
        let labels = vec![
            LabelDistribution::new(vec![1.0, 0.0], "s").unwrap(),
            LabelDistribution::new(vec![0.0, 1.0], "s").unwrap(),
            LabelDistribution::new(vec![0.5, 0.5], "s").unwrap(),
        ];
        let classes = vec![0, 0, 1];
        let means = classwise_mean(&labels, &classes).unwrap();
        assert_eq!(means[&0].probs(), &[0.5, 0.5]);
        assert_eq!(means[&1].probs(), &[0.5, 0.5]);
        assert_eq!(means.len(), 2);
    }

    #[test]
    fn classwise_mean_rejects_mixed_spaces() {
        let labels = vec![
            LabelDistribution::new(vec![1.0, 0.0], "a").unwrap(),
            LabelDistribution::new(vec![1.0, 0.0], "b").unwrap(),
        ];
        assert!(classwise_mean(&labels, &[0, 0]).is_err());
    }

    #[test]
    fn distribution_constructor_validates() {
        assert!(LabelDistribution::new(vec![0.5, 0.6], "s").is_err());
        assert!(LabelDistribution::new(vec![-0.1, 1.1], "s").is_err());
        assert!(LabelDistribution::new(vec![], "s").is_err());
        assert!(LabelDistribution::one_hot(3, 3, "s").is_err());
    }

    #[test]
    fn label_fn_parses_from_cli_strings() {
        assert_eq!("softmax".parse::<LabelFn>().unwrap(), LabelFn::Softmax);
        assert_eq!(
            "temp_softmax:2.5".parse::<LabelFn>().unwrap(),
            LabelFn::TempSoftmax { tau: 2.5 }
        );
        assert_eq!("classwise_mean".parse::<LabelFn>().unwrap(), LabelFn::ClasswiseMean);
        assert!("temp_softmax:0".parse::<LabelFn>().is_err());
        assert!("nonsense".parse::<LabelFn>().is_err());
    }

    proptest! {
        /// Sparsemax must land on the simplex and keep the logit ordering.
        #[test]
        fn sparsemax_is_a_simplex_projection(
            logits in proptest::collection::vec(-10.0f64..10.0, 1..8)
        ) {
            let p = sparsemax_label(&logits, "s").unwrap();
            let sum: f64 = p.probs().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            prop_assert!(p.probs().iter().all(|&v| v >= 0.0));
            for i in 0..logits.len() {
                for j in 0..logits.len() {
                    if logits[i] > logits[j] {
                        prop_assert!(p.probs()[i] >= p.probs()[j] - 1e-12);
                    }
                }
            }
        }

        /// Shifting every logit by a constant must not change sparsemax.
        #[test]
        fn sparsemax_is_shift_invariant(
            logits in proptest::collection::vec(-5.0f64..5.0, 1..8),
            shift in -20.0f64..20.0
        ) {
            let base = sparsemax_label(&logits, "s").unwrap();
            let shifted: Vec<f64> = logits.iter().map(|z| z + shift).collect();
            let moved = sparsemax_label(&shifted, "s").unwrap();
            for (a, b) in base.probs().iter().zip(moved.probs()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        /// Sparsemax support is never larger than softmax's (softmax keeps
        /// everything positive; sparsemax may zero entries out).
        #[test]
        fn sparsemax_is_at_least_as_sparse_as_softmax(
            logits in proptest::collection::vec(-10.0f64..10.0, 1..8)
        ) {
            let sp = sparsemax_label(&logits, "s").unwrap();
            let sm = softmax_label(&logits, "s").unwrap();
            let sp_support = sp.probs().iter().filter(|&&v| v > 0.0).count();
            let sm_support = sm.probs().iter().filter(|&&v| v > 0.0).count();
            prop_assert!(sp_support <= sm_support);
        }
    }
}
