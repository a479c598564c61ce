//! Transfer learning when the source dataset is gone.
//!
//! The usual recipe — pre-train on the source task, fine-tune on the target —
//! assumes the source data is still around. Here we only keep two artifacts
//! of the source task: a trained classifier and a per-class conditional
//! generator. Everything downstream is rebuilt from those:
//!
//! * **Pseudo conditional sampling** ([`pcs`]) turns target inputs into
//!   source-space label distributions and asks the generator for matching
//!   samples, yielding a pseudo dataset that imitates the (discarded) source
//!   data where it matters for the target task.
//! * **Pseudo pre-training** ([`pretrain`]) trains the target architecture on
//!   generator output before fine-tuning, replacing classical pre-training.
//! * **Pseudo semi-supervised learning** ([`pssl`]) treats the pseudo samples
//!   as the unlabeled pool of a semi-supervised objective on the target task.
//!
//! Baselines (training from scratch, knowledge distillation, training
//! directly on pseudo pairs) live in [`distill`] and [`harness`], and the
//! diagnostics used to explain when the transfer works — Fréchet distance
//! between feature clouds, confidence-based class filtering, rank
//! correlation between distance and accuracy gain — live in [`metrics`].
//!
//! All experiments run on synthetic Gaussian class clouds ([`synth`]) with
//! disjoint source/target label spaces, small enough that the full
//! experiment grid finishes on a laptop yet still reproduces the qualitative
//! effects. Every run is deterministic: randomness flows from a single seed
//! through named streams ([`rng`]), and artifacts serialize with enough
//! digits to round-trip exactly ([`jsonio`]).

pub mod data;
pub mod distill;
pub mod error;
pub mod generator;
pub mod harness;
pub mod jsonio;
pub mod labelfn;
pub mod linalg;
pub mod loss;
pub mod metrics;
pub mod mlp;
pub mod optim;
pub mod pcs;
pub mod pretrain;
pub mod pssl;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
