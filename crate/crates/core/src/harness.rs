//! The experiment harness: build a task world per seed, run each requested
//! method on it, and stream results to CSV.
//!
//! Isolation rules that make result tables comparable and reproducible:
//!
//! * the world (task draw, train/val split, source classifier, generator)
//!   depends only on the config's task/source fields and the run seed —
//!   never on which methods run;
//! * each `(method, seed)` pair trains from its own derived stream, so
//!   adding a method to the list leaves every other row bit-identical;
//! * a failed run produces a row with empty result columns and the
//!   remaining runs proceed.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::LabeledDataset;
use crate::distill::{finetune_teacher, kd_train, KdHyper, KdMethod};
use crate::error::{Error, Result};
use crate::generator::{ConditionalGenerator, ConditioningMode};
use crate::labelfn::LabelFn;
use crate::metrics::{accuracy, confidence_filter, frechet_distance, spearman, SpearmanResult};
use crate::mlp::MlpClassifier;
use crate::pcs::{build_pseudo_dataset, pseudo_labels, pseudo_pairs, PseudoLabelSet};
use crate::pretrain::{pseudo_pretrain, swap_final_layer, PretrainConfig, PretrainStrategy};
use crate::pssl::{train_pssl, train_pseudo_supervised, SslConfig};
use crate::rng::{derive_rng, derive_seed};
use crate::synth::{make_task_pair, train_source_classifier, TaskPair, TaskPairSpec, SOURCE_SPACE};
use crate::train::{init_classifier, train_supervised, TrainConfig};

/// Everything the harness can run on a world.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Supervised training on the labeled target data only.
    Scratch,
    /// Pseudo pre-training, head swap, supervised fine-tuning.
    Pp,
    /// Scratch init plus the unsupervised objective on a synthetic pool.
    Pssl,
    /// Pseudo pre-training followed by the semi-supervised fine-tune.
    PpPssl,
    /// Distill a fine-tuned teacher into a fresh student, MSE on logits.
    LogitMatching,
    /// Distill with temperature-softened KL.
    SoftTarget,
    /// Treat synthetic pairs as labeled data next to the real ones.
    PseudoSupervised,
    /// The fine-tuned source classifier itself, scored directly.
    FtTeacher,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Scratch,
        Method::Pp,
        Method::Pssl,
        Method::PpPssl,
        Method::LogitMatching,
        Method::SoftTarget,
        Method::PseudoSupervised,
        Method::FtTeacher,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Scratch => "scratch",
            Method::Pp => "pp",
            Method::Pssl => "pssl",
            Method::PpPssl => "pp_pssl",
            Method::LogitMatching => "logit_matching",
            Method::SoftTarget => "soft_target",
            Method::PseudoSupervised => "pseudo_supervised",
            Method::FtTeacher => "ft_teacher",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            Error::validation(format!(
                "unknown method {s:?} (expected one of {})",
                Method::ALL.map(|m| m.name()).join(", ")
            ))
        })
    }
}

/// Which pseudo pre-training stream the `pp`/`pp_pssl` methods use. The
/// data-carrying strategies are materialized at run time: `filtered`
/// derives its class set from the confidence filter, `pcs` from pseudo
/// conditional labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PpStrategyKind {
    Uniform,
    Filtered,
    Pcs,
    Offline,
}

impl PpStrategyKind {
    pub fn name(&self) -> &'static str {
        match self {
            PpStrategyKind::Uniform => "uniform",
            PpStrategyKind::Filtered => "filtered",
            PpStrategyKind::Pcs => "pcs",
            PpStrategyKind::Offline => "offline",
        }
    }
}

impl FromStr for PpStrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<PpStrategyKind> {
        [PpStrategyKind::Uniform, PpStrategyKind::Filtered, PpStrategyKind::Pcs, PpStrategyKind::Offline]
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::validation(format!(
                    "unknown pre-training strategy {s:?} (expected uniform, filtered, pcs, or offline)"
                ))
            })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    pub task: TaskPairSpec,
    /// Hidden widths of the source classifier.
    pub source_hidden: Vec<usize>,
    /// Hidden widths of every target-side network.
    pub target_hidden: Vec<usize>,
    pub source_train: TrainConfig,
    /// Training schedule for networks starting from random weights
    /// (scratch, distillation students, semi-supervised from scratch).
    pub scratch_train: TrainConfig,
    /// Gentler schedule for networks starting from pre-trained weights
    /// (after pseudo pre-training, and the fine-tuned teacher).
    pub finetune_train: TrainConfig,
    pub pretrain: PretrainConfig,
    pub pp_strategy: PpStrategyKind,
    /// Mean-probability cutoff for the `filtered` strategy.
    pub filter_threshold: f64,
    /// Init scale for freshly swapped heads.
    pub head_scale: f64,
    /// Fraction of target training data held out per class; recorded per
    /// epoch but never used for selection (final-epoch weights are scored).
    pub val_fraction: f64,
    pub label_fn: LabelFn,
    /// Synthetic pool size for conditional sampling methods.
    pub n_pseudo: usize,
    pub kd: KdHyper,
    pub ssl: SslConfig,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    /// Where `results.csv` lands; `None` keeps results in memory only.
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Desk-scale defaults for the full method table.
    pub fn desk_default(seed: u64) -> ExperimentConfig {
        let sgd = |lr: f64, milestones: Vec<usize>| crate::optim::SgdConfig {
            lr,
            momentum: 0.9,
            weight_decay: 1e-4,
            decay_milestones: milestones,
            decay_factor: 0.1,
        };
        ExperimentConfig {
            task: TaskPairSpec::desk_default(seed),
            source_hidden: vec![48],
            target_hidden: vec![32, 32],
            source_train: TrainConfig { epochs: 10, batch_size: 128, optimizer: sgd(0.1, vec![7]) },
            scratch_train: TrainConfig {
                epochs: 50,
                batch_size: 16,
                optimizer: sgd(0.05, vec![30, 42]),
            },
            finetune_train: TrainConfig {
                epochs: 50,
                batch_size: 16,
                optimizer: sgd(0.005, vec![30, 42]),
            },
            pretrain: PretrainConfig::desk_default(),
            pp_strategy: PpStrategyKind::Uniform,
            filter_threshold: 0.1,
            head_scale: 0.1,
            val_fraction: 0.1,
            label_fn: LabelFn::Softmax,
            n_pseudo: 5000,
            kd: KdHyper::desk_default(),
            ssl: SslConfig::desk_default(),
            seeds: vec![1, 2, 3, 4, 5],
            methods: Method::ALL.to_vec(),
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        if self.source_hidden == self.target_hidden {
            return Err(Error::validation(
                "source and target architectures must differ (that mismatch is the point: \
                 weights cannot be copied across)",
            ));
        }
        self.source_train.validate()?;
        self.scratch_train.validate()?;
        self.finetune_train.validate()?;
        self.pretrain.validate()?;
        self.kd.validate()?;
        self.ssl.validate()?;
        if !self.filter_threshold.is_finite() || !(0.0..1.0).contains(&self.filter_threshold) {
            return Err(Error::validation("filter threshold must lie in [0, 1)"));
        }
        if !self.head_scale.is_finite() || self.head_scale < 0.0 {
            return Err(Error::validation("head init scale must be finite and ≥ 0"));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::validation("validation fraction must lie in [0, 1)"));
        }
        if self.n_pseudo == 0 {
            return Err(Error::validation("synthetic pool size must be ≥ 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::validation("need at least one seed"));
        }
        if self.methods.is_empty() {
            return Err(Error::validation("need at least one method"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.methods {
            if !seen.insert(m.name()) {
                return Err(Error::validation(format!("method {} listed twice", m.name())));
            }
        }
        Ok(())
    }
}

/// Serialization view for hashing: every semantic field, in declaration
/// order, excluding the method list and output directory (neither changes
/// what any single run computes).
#[derive(Serialize)]
struct HashView<'a> {
    task: &'a TaskPairSpec,
    source_hidden: &'a [usize],
    target_hidden: &'a [usize],
    source_train: &'a TrainConfig,
    scratch_train: &'a TrainConfig,
    finetune_train: &'a TrainConfig,
    pretrain: &'a PretrainConfig,
    pp_strategy: PpStrategyKind,
    filter_threshold: f64,
    head_scale: f64,
    val_fraction: f64,
    label_fn: &'a LabelFn,
    n_pseudo: usize,
    kd: &'a KdHyper,
    ssl: &'a SslConfig,
    seeds: &'a [u64],
}

/// Hex digest identifying the semantic content of a config. Two configs
/// hash equal iff they produce the same rows (methods and output location
/// are excluded).
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let view = HashView {
        task: &cfg.task,
        source_hidden: &cfg.source_hidden,
        target_hidden: &cfg.target_hidden,
        source_train: &cfg.source_train,
        scratch_train: &cfg.scratch_train,
        finetune_train: &cfg.finetune_train,
        pretrain: &cfg.pretrain,
        pp_strategy: cfg.pp_strategy,
        filter_threshold: cfg.filter_threshold,
        head_scale: cfg.head_scale,
        val_fraction: cfg.val_fraction,
        label_fn: &cfg.label_fn,
        n_pseudo: cfg.n_pseudo,
        kd: &cfg.kd,
        ssl: &cfg.ssl,
        seeds: &cfg.seeds,
    };
    let json = crate::jsonio::to_json_string(&view).expect("config serialization cannot fail");
    let digest = Sha256::digest(json.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// The per-seed environment every method runs against.
pub struct World {
    pub pair: TaskPair,
    pub train: LabeledDataset,
    pub val: LabeledDataset,
    pub source_classifier: MlpClassifier,
    pub generator: ConditionalGenerator,
}

/// Build the world for one run seed. Depends only on the config's task and
/// source fields, never on the method list.
pub fn build_world(cfg: &ExperimentConfig, run_seed: u64) -> Result<World> {
    let world_seed = derive_seed(cfg.task.seed, &["world", &run_seed.to_string()]);
    let spec = TaskPairSpec { seed: world_seed, ..cfg.task.clone() };
    let pair = make_task_pair(&spec)?;
    let (train, val) = pair
        .target_train
        .split_train_val(cfg.val_fraction, &mut derive_rng(world_seed, &["split"]))?;
    let (source_classifier, _) = train_source_classifier(
        &pair.source,
        &cfg.source_hidden,
        &cfg.source_train,
        derive_seed(world_seed, &["source"]),
    )?;
    let generator = ConditionalGenerator::fit(&pair.source, ConditioningMode::Interpolate)?;
    Ok(World { pair, train, val, source_classifier, generator })
}

/// Stream the `(method, seed)` pair trains from.
pub fn method_seed(cfg: &ExperimentConfig, method: Method, run_seed: u64) -> u64 {
    derive_seed(cfg.task.seed, &["method", method.name(), &run_seed.to_string()])
}

/// What one method run produced.
#[derive(Clone, Copy, Debug)]
pub struct MethodOutcome {
    /// Accuracy of the final-epoch weights on the held-out test set.
    pub accuracy: f64,
    /// Fréchet distance between the synthetic pool and the labeled target
    /// training features, for methods that build a pool.
    pub fd_pseudo_target: Option<f64>,
}

fn target_widths(cfg: &ExperimentConfig, world: &World) -> Vec<usize> {
    let mut widths = Vec::with_capacity(cfg.target_hidden.len() + 2);
    widths.push(world.train.dim());
    widths.extend_from_slice(&cfg.target_hidden);
    widths.push(world.train.num_classes());
    widths
}

fn build_strategy(cfg: &ExperimentConfig, world: &World, m_seed: u64) -> Result<PretrainStrategy> {
    Ok(match cfg.pp_strategy {
        PpStrategyKind::Uniform => PretrainStrategy::Uniform,
        PpStrategyKind::Offline => PretrainStrategy::Offline,
        PpStrategyKind::Filtered => PretrainStrategy::Filtered(confidence_filter(
            &world.source_classifier,
            &world.train,
            cfg.filter_threshold,
        )?),
        PpStrategyKind::Pcs => PretrainStrategy::Pcs(world_pseudo_labels(cfg, world, m_seed)?),
    })
}

fn world_pseudo_labels(
    cfg: &ExperimentConfig,
    world: &World,
    m_seed: u64,
) -> Result<PseudoLabelSet> {
    pseudo_labels(
        &world.source_classifier,
        &world.train,
        &cfg.label_fn,
        SOURCE_SPACE,
        &mut derive_rng(m_seed, &["pcs-labels"]),
    )
}

/// Pre-train on the generator and swap in a fresh target head.
fn pretrained_target_init(
    cfg: &ExperimentConfig,
    world: &World,
    m_seed: u64,
) -> Result<MlpClassifier> {
    let strategy = build_strategy(cfg, world, m_seed)?;
    let (pretrained, _) = pseudo_pretrain(
        &cfg.target_hidden,
        &world.generator,
        &cfg.pretrain,
        &strategy,
        derive_seed(m_seed, &["pp"]),
    )?;
    swap_final_layer(
        &pretrained,
        world.train.num_classes(),
        cfg.head_scale,
        &mut derive_rng(m_seed, &["head"]),
    )
}

/// Run one method against a prepared world.
pub fn run_method(
    cfg: &ExperimentConfig,
    world: &World,
    method: Method,
    m_seed: u64,
) -> Result<MethodOutcome> {
    let test = &world.pair.target_test;
    let val = (world.val.n() > 0).then_some(&world.val);

    let score = |model: &MlpClassifier| accuracy(model, test);
    let pool_and_fd = |m_seed: u64| -> Result<(crate::data::UnlabeledDataset, f64)> {
        let labels = world_pseudo_labels(cfg, world, m_seed)?;
        let pool = build_pseudo_dataset(
            &world.generator,
            &labels,
            cfg.n_pseudo,
            derive_seed(m_seed, &["pcs-build"]),
        )?;
        let fd = frechet_distance(pool.features(), world.train.features())?;
        Ok((pool, fd))
    };

    match method {
        Method::Scratch => {
            let init = init_classifier(&target_widths(cfg, world), m_seed)?;
            let (model, _) =
                train_supervised(&init, &world.train, val, &cfg.scratch_train, m_seed)?;
            Ok(MethodOutcome { accuracy: score(&model)?, fd_pseudo_target: None })
        }
        Method::Pp => {
            let init = pretrained_target_init(cfg, world, m_seed)?;
            let (model, _) =
                train_supervised(&init, &world.train, val, &cfg.finetune_train, m_seed)?;
            Ok(MethodOutcome { accuracy: score(&model)?, fd_pseudo_target: None })
        }
        Method::Pssl => {
            let (pool, fd) = pool_and_fd(m_seed)?;
            let init = init_classifier(&target_widths(cfg, world), m_seed)?;
            let (model, _) =
                train_pssl(&init, &world.train, &pool, val, &cfg.ssl, &cfg.scratch_train, m_seed)?;
            Ok(MethodOutcome { accuracy: score(&model)?, fd_pseudo_target: Some(fd) })
        }
        Method::PpPssl => {
            let (pool, fd) = pool_and_fd(m_seed)?;
            let init = pretrained_target_init(cfg, world, m_seed)?;
            let (model, _) =
                train_pssl(&init, &world.train, &pool, val, &cfg.ssl, &cfg.finetune_train, m_seed)?;
            Ok(MethodOutcome { accuracy: score(&model)?, fd_pseudo_target: Some(fd) })
        }
        Method::LogitMatching | Method::SoftTarget => {
            let (teacher, _) = finetune_teacher(
                &world.source_classifier,
                &world.train,
                val,
                cfg.head_scale,
                &cfg.finetune_train,
                derive_seed(m_seed, &["teacher"]),
            )?;
            let kd_method = if method == Method::LogitMatching {
                KdMethod::LogitMatching
            } else {
                KdMethod::SoftTarget
            };
            let (student, _) = kd_train(
                &cfg.target_hidden,
                &teacher,
                &world.train,
                val,
                kd_method,
                &cfg.kd,
                &cfg.scratch_train,
                m_seed,
            )?;
            Ok(MethodOutcome { accuracy: score(&student)?, fd_pseudo_target: None })
        }
        Method::PseudoSupervised => {
            let labels = world_pseudo_labels(cfg, world, m_seed)?;
            let pairs = pseudo_pairs(
                &world.generator,
                &labels,
                &world.train,
                cfg.n_pseudo,
                derive_seed(m_seed, &["pcs-build"]),
            )?;
            let fd = frechet_distance(pairs.features(), world.train.features())?;
            let init = init_classifier(&target_widths(cfg, world), m_seed)?;
            let (model, _) = train_pseudo_supervised(
                &init,
                &world.train,
                &pairs,
                val,
                &cfg.scratch_train,
                m_seed,
            )?;
            Ok(MethodOutcome { accuracy: score(&model)?, fd_pseudo_target: Some(fd) })
        }
        Method::FtTeacher => {
            let (teacher, _) = finetune_teacher(
                &world.source_classifier,
                &world.train,
                val,
                cfg.head_scale,
                &cfg.finetune_train,
                derive_seed(m_seed, &["teacher"]),
            )?;
            Ok(MethodOutcome { accuracy: score(&teacher)?, fd_pseudo_target: None })
        }
    }
}

/// One row of the result table.
#[derive(Clone, Debug, Serialize)]
pub struct RunRecord {
    pub method: String,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub fd_pseudo_target: Option<f64>,
    pub seconds: f64,
    pub config_hash: String,
    /// Failure description; such rows have empty result columns in the CSV.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const CSV_HEADER: &str = "method,seed,accuracy,fd_pseudo_target,seconds,config_hash";

fn csv_field(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn csv_row(r: &RunRecord) -> String {
    format!(
        "{},{},{},{},{:.3},{}",
        r.method,
        r.seed,
        csv_field(r.accuracy),
        csv_field(r.fd_pseudo_target),
        r.seconds,
        r.config_hash
    )
}

/// Run every `(seed, method)` combination in the config, in order, and
/// return the rows. With `out_dir` set, rows stream to
/// `<out_dir>/results.csv` (header always written) as they finish.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let hash = config_hash(cfg);

    let mut csv = match &cfg.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let file = File::create(dir.join("results.csv"))?;
            let mut w = BufWriter::new(file);
            writeln!(w, "{CSV_HEADER}")?;
            Some(w)
        }
        None => None,
    };

    let mut records = Vec::with_capacity(cfg.seeds.len() * cfg.methods.len());
    for &run_seed in &cfg.seeds {
        let world = build_world(cfg, run_seed).map_err(|e| e.to_string());
        for &method in &cfg.methods {
            let started = Instant::now();
            let outcome = match &world {
                Ok(w) => run_method(cfg, w, method, method_seed(cfg, method, run_seed))
                    .map_err(|e| e.to_string()),
                Err(e) => Err(format!("world construction failed: {e}")),
            };
            let seconds = started.elapsed().as_secs_f64();
            let record = match outcome {
                Ok(out) => RunRecord {
                    method: method.name().to_string(),
                    seed: run_seed,
                    accuracy: Some(out.accuracy),
                    fd_pseudo_target: out.fd_pseudo_target,
                    seconds,
                    config_hash: hash.clone(),
                    error: None,
                },
                Err(e) => RunRecord {
                    method: method.name().to_string(),
                    seed: run_seed,
                    accuracy: None,
                    fd_pseudo_target: None,
                    seconds,
                    config_hash: hash.clone(),
                    error: Some(e),
                },
            };
            if let Some(w) = csv.as_mut() {
                writeln!(w, "{}", csv_row(&record))?;
                w.flush()?;
            }
            records.push(record);
        }
    }
    Ok(records)
}

/// One (seed, rung) measurement of the alignment study.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AlignmentRun {
    pub seed: u64,
    pub fd_pseudo_target: f64,
    pub scratch_accuracy: f64,
    pub pssl_accuracy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlignmentRung {
    pub sigma: f64,
    pub runs: Vec<AlignmentRun>,
    pub mean_fd: f64,
    /// Mean of (semi-supervised accuracy − scratch accuracy).
    pub mean_gain: f64,
}

#[derive(Clone, Debug)]
pub struct AlignmentReport {
    pub rungs: Vec<AlignmentRung>,
    /// Rank correlation between per-rung mean FD and mean gain.
    pub correlation: SpearmanResult,
}

/// Sweep `sigma_align` over `ladder` (≥ 4 rungs), measuring per seed the
/// pool-vs-target Fréchet distance and the accuracy gain of the
/// semi-supervised method over scratch, then rank-correlate rung means.
///
/// Rungs share every random draw except the target-mean perturbation scale,
/// so along the ladder each seed sees the same task geometry pushed
/// progressively further from the source manifold.
pub fn alignment_study(cfg: &ExperimentConfig, ladder: &[f64]) -> Result<AlignmentReport> {
    cfg.validate()?;
    if ladder.len() < 4 {
        return Err(Error::validation(format!(
            "an alignment ladder needs at least 4 rungs, got {}",
            ladder.len()
        )));
    }
    if ladder.iter().any(|s| !s.is_finite() || *s < 0.0) {
        return Err(Error::validation("ladder values must be finite and ≥ 0"));
    }

    let mut csv = match &cfg.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let file = File::create(dir.join("alignment.csv"))?;
            let mut w = BufWriter::new(file);
            writeln!(w, "sigma,seed,fd_pseudo_target,scratch_accuracy,pssl_accuracy")?;
            Some(w)
        }
        None => None,
    };

    let mut rungs = Vec::with_capacity(ladder.len());
    for &sigma in ladder {
        let rung_cfg = ExperimentConfig {
            task: TaskPairSpec { sigma_align: sigma, ..cfg.task.clone() },
            ..cfg.clone()
        };
        let mut runs = Vec::with_capacity(cfg.seeds.len());
        for &run_seed in &cfg.seeds {
            let world = build_world(&rung_cfg, run_seed)?;
            let scratch = run_method(
                &rung_cfg,
                &world,
                Method::Scratch,
                method_seed(&rung_cfg, Method::Scratch, run_seed),
            )?;
            let pssl = run_method(
                &rung_cfg,
                &world,
                Method::Pssl,
                method_seed(&rung_cfg, Method::Pssl, run_seed),
            )?;
            let run = AlignmentRun {
                seed: run_seed,
                fd_pseudo_target: pssl
                    .fd_pseudo_target
                    .expect("the semi-supervised method always builds a pool"),
                scratch_accuracy: scratch.accuracy,
                pssl_accuracy: pssl.accuracy,
            };
            if let Some(w) = csv.as_mut() {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    sigma, run_seed, run.fd_pseudo_target, run.scratch_accuracy, run.pssl_accuracy
                )?;
                w.flush()?;
            }
            runs.push(run);
        }
        let n = runs.len() as f64;
        let mean_fd = runs.iter().map(|r| r.fd_pseudo_target).sum::<f64>() / n;
        let mean_gain =
            runs.iter().map(|r| r.pssl_accuracy - r.scratch_accuracy).sum::<f64>() / n;
        rungs.push(AlignmentRung { sigma, runs, mean_fd, mean_gain });
    }

    let fds: Vec<f64> = rungs.iter().map(|r| r.mean_fd).collect();
    let gains: Vec<f64> = rungs.iter().map(|r| r.mean_gain).collect();
    let correlation = spearman(&fds, &gains)?;
    Ok(AlignmentReport { rungs, correlation })
}
