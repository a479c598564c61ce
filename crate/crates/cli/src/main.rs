//! Command-line front end. Each subcommand wraps one library entry point
//! and moves data through JSON artifacts, so the full pipeline — task
//! generation, source training, generator fitting, pseudo conditional
//! sampling, pseudo pre-training, fine-tuning, the semi-supervised and
//! distillation baselines, and the experiment table — can be driven from
//! a shell.
//!
//! Every command that involves randomness takes an explicit `--seed`;
//! rerunning a command with the same inputs and seed reproduces its output
//! artifacts byte for byte (result tables exempt their wall-clock column).

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pseudotl::data::{LabeledDataset, UnlabeledDataset};
use pseudotl::distill::{kd_train, KdHyper, KdMethod};
use pseudotl::error::{Error, Result};
use pseudotl::generator::{ConditionalGenerator, ConditioningMode};
use pseudotl::harness::{
    alignment_study, config_hash, run_experiment, ExperimentConfig, PpStrategyKind,
};
use pseudotl::labelfn::LabelFn;
use pseudotl::metrics::{confidence_filter, frechet_distance};
use pseudotl::mlp::MlpClassifier;
use pseudotl::pcs::{build_pseudo_dataset, pseudo_labels, PseudoLabelSet};
use pseudotl::pretrain::{pseudo_pretrain, swap_final_layer, PretrainConfig, PretrainStrategy};
use pseudotl::pssl::{train_pssl, SslConfig, SslMethod};
use pseudotl::rng::{derive_rng, derive_seed};
use pseudotl::synth::{
    default_mixing, make_task_pair, train_source_classifier, TaskPairSpec, SOURCE_SPACE,
};
use pseudotl::train::{init_classifier, train_supervised, TrainConfig, TrainLog};

#[derive(Parser)]
#[command(
    name = "pseudotl",
    about = "Transfer learning without source data, on synthetic Gaussian tasks",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a source/target task pair and write its datasets.
    MakeTask(MakeTaskArgs),
    /// Train the source classifier on a labeled dataset.
    TrainSource(TrainSourceArgs),
    /// Fit the class-conditional Gaussian generator to a labeled dataset.
    FitGenerator(FitGeneratorArgs),
    /// Pseudo conditional sampling: label target data through the source
    /// classifier, then sample a synthetic dataset from the generator.
    Pcs(PcsArgs),
    /// Pseudo pre-training on generator output.
    Pp(PpArgs),
    /// Supervised training on target data, from a checkpoint or from scratch.
    Train(TrainArgs),
    /// Semi-supervised training with a synthetic unlabeled pool.
    Pssl(PsslArgs),
    /// Distill a teacher checkpoint into a fresh student.
    Distill(DistillArgs),
    /// Fréchet distance between the feature clouds of two dataset files.
    Fid(FidArgs),
    /// Source classes the classifier finds plausible for a target dataset.
    Filter(FilterArgs),
    /// Run the full method-by-seed experiment table from a config file.
    Experiment(ExperimentArgs),
    /// Sweep task alignment and correlate distribution distance with gain.
    AlignmentStudy(AlignmentStudyArgs),
    /// Print (or save) the default experiment config as JSON.
    DefaultConfig(DefaultConfigArgs),
}

#[derive(Args)]
struct MakeTaskArgs {
    #[arg(long)]
    seed: u64,
    /// Directory for source.json, target_train.json, target_test.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 20)]
    source_classes: usize,
    #[arg(long, default_value_t = 8)]
    target_classes: usize,
    #[arg(long, default_value_t = 500)]
    source_per_class: usize,
    #[arg(long, default_value_t = 200)]
    target_train: usize,
    #[arg(long, default_value_t = 400)]
    target_test: usize,
    /// Scale of the perturbation pushing target class means off the source
    /// mixture manifold (0 = perfectly aligned).
    #[arg(long, default_value_t = 0.0)]
    sigma_align: f64,
}

#[derive(Args)]
struct TrainSourceArgs {
    /// Labeled source dataset.
    #[arg(long)]
    data: PathBuf,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "48")]
    arch: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// Epochs after which the learning rate decays by 10x.
    #[arg(long, value_delimiter = ',', default_value = "7")]
    milestones: Vec<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitGeneratorArgs {
    /// Labeled dataset to fit per-class Gaussians to.
    #[arg(long)]
    data: PathBuf,
    /// Conditioning mode: interpolate or mixture.
    #[arg(long, default_value = "interpolate")]
    mode: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PcsArgs {
    /// Source classifier checkpoint.
    #[arg(long)]
    classifier: PathBuf,
    /// Labeled target dataset to pseudo-label.
    #[arg(long)]
    target: PathBuf,
    /// Generator file from fit-generator.
    #[arg(long)]
    generator: PathBuf,
    /// softmax | temp_softmax:<tau> | argmax | sparsemax | classwise_mean | random
    #[arg(long, default_value = "softmax")]
    label_fn: String,
    /// Number of synthetic samples.
    #[arg(long, default_value_t = 5000)]
    n: usize,
    #[arg(long)]
    seed: u64,
    /// Output synthetic dataset (unlabeled).
    #[arg(long)]
    out: PathBuf,
    /// Also save the pseudo label set.
    #[arg(long)]
    labels_out: Option<PathBuf>,
}

#[derive(Args)]
struct PpArgs {
    /// Hidden layer widths of the network to pre-train.
    #[arg(long, value_delimiter = ',', required = true)]
    arch: Vec<usize>,
    #[arg(long)]
    generator: PathBuf,
    /// uniform | filtered | pcs | offline
    #[arg(long, default_value = "uniform")]
    strategy: String,
    /// Class subset for the filtered strategy, comma separated.
    #[arg(long, value_delimiter = ',')]
    classes: Vec<usize>,
    /// Pseudo label set file for the pcs strategy.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    steps: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.1)]
    lr: f64,
    /// Steps after which the learning rate decays by 10x.
    #[arg(long, value_delimiter = ',', default_value = "1200")]
    milestones: Vec<usize>,
    /// Pool size for the offline strategy (omit for the default).
    #[arg(long)]
    offline_size: Option<usize>,
    /// Replace the head with a fresh one for this many classes before
    /// saving, readying the checkpoint for target fine-tuning.
    #[arg(long)]
    swap_classes: Option<usize>,
    #[arg(long, default_value_t = 0.1)]
    head_scale: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV of per-step losses.
    #[arg(long)]
    losses_out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Starting checkpoint. Omit to train from scratch (requires --arch).
    #[arg(long, conflicts_with = "arch")]
    init: Option<PathBuf>,
    /// Hidden widths for a fresh network (scratch training).
    #[arg(long, value_delimiter = ',')]
    arch: Vec<usize>,
    /// Labeled target dataset.
    #[arg(long)]
    target: PathBuf,
    /// Replace the checkpoint's head before training (for checkpoints
    /// whose output layer belongs to a different label space).
    #[arg(long)]
    swap_head: bool,
    #[arg(long, default_value_t = 0.1)]
    head_scale: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, value_delimiter = ',')]
    milestones: Vec<usize>,
    /// Per-class fraction held out for validation (0 disables).
    #[arg(long, default_value_t = 0.0)]
    val_fraction: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV of per-epoch statistics.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct PsslArgs {
    /// Starting checkpoint (its output layer must match the target classes).
    #[arg(long)]
    init: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Unlabeled synthetic pool from pcs.
    #[arg(long)]
    pseudo: PathBuf,
    /// uda | fixmatch | pseudo_label | soft_pseudo_label | entmin | consistency
    #[arg(long, default_value = "uda")]
    method: String,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Confidence threshold for masked methods.
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    /// Sharpening temperature for soft-target methods.
    #[arg(long, default_value_t = 0.4)]
    tau: f64,
    #[arg(long, default_value_t = 64)]
    unsup_batch: usize,
    #[arg(long, default_value_t = 0.5)]
    augment_strength: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, value_delimiter = ',')]
    milestones: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    val_fraction: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// CSV of per-epoch statistics.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct DistillArgs {
    /// Teacher checkpoint; must already map to the target label space.
    #[arg(long)]
    teacher: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Hidden widths of the student.
    #[arg(long, value_delimiter = ',', required = true)]
    arch: Vec<usize>,
    /// logit_matching | soft_target
    #[arg(long, default_value = "soft_target")]
    method: String,
    #[arg(long, default_value_t = 4.0)]
    temp: f64,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, value_delimiter = ',')]
    milestones: Vec<usize>,
    #[arg(long, default_value_t = 0.0)]
    val_fraction: f64,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    metrics: Option<PathBuf>,
}

#[derive(Args)]
struct FidArgs {
    /// Either side accepts a labeled or an unlabeled dataset file.
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    classifier: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    threshold: f64,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config as JSON (see default-config for the schema).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config's out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AlignmentStudyArgs {
    #[arg(long)]
    config: PathBuf,
    /// Perturbation scales to sweep, comma separated (at least 4).
    #[arg(long, value_delimiter = ',', required = true)]
    ladder: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DefaultConfigArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn sgd(lr: f64, milestones: Vec<usize>) -> pseudotl::optim::SgdConfig {
    pseudotl::optim::SgdConfig {
        lr,
        momentum: 0.9,
        weight_decay: 1e-4,
        decay_milestones: milestones,
        decay_factor: 0.1,
    }
}

fn train_cfg(epochs: usize, batch_size: usize, lr: f64, milestones: Vec<usize>) -> TrainConfig {
    TrainConfig { epochs, batch_size, optimizer: sgd(lr, milestones) }
}

/// Hold out a per-class validation split, or keep everything for training.
fn maybe_split(
    ds: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<(LabeledDataset, Option<LabeledDataset>)> {
    if fraction == 0.0 {
        return Ok((ds.clone(), None));
    }
    let (train, val) = ds.split_train_val(fraction, &mut derive_rng(seed, &["split"]))?;
    Ok((train, (val.n() > 0).then_some(val)))
}

fn write_metrics(path: &Path, log: &TrainLog) -> Result<()> {
    let mut text = String::from("epoch,sup_loss,aux_loss,val_accuracy\n");
    for e in &log.epochs {
        let val = e.val_accuracy.map(|v| v.to_string()).unwrap_or_default();
        text.push_str(&format!("{},{},{},{}\n", e.epoch, e.sup_loss, e.aux_loss, val));
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn report_log(log: &TrainLog) {
    if let Some(last) = log.epochs.last() {
        match last.val_accuracy {
            Some(acc) => println!(
                "epoch {}: sup_loss {:.4}, val_accuracy {:.4}",
                last.epoch, last.sup_loss, acc
            ),
            None => println!("epoch {}: sup_loss {:.4}", last.epoch, last.sup_loss),
        }
    }
}

/// Seeds for smoke runs, e.g. `SEED_OVERRIDE=3` or `SEED_OVERRIDE=1,2`.
fn seed_override() -> Result<Option<Vec<u64>>> {
    match std::env::var("SEED_OVERRIDE") {
        Err(_) => Ok(None),
        Ok(raw) => raw
            .split(',')
            .map(|s| {
                s.trim().parse::<u64>().map_err(|_| {
                    Error::validation(format!("SEED_OVERRIDE: {s:?} is not a seed"))
                })
            })
            .collect::<Result<Vec<u64>>>()
            .map(Some),
    }
}

fn load_experiment_config(path: &Path, out: Option<PathBuf>) -> Result<ExperimentConfig> {
    let mut cfg: ExperimentConfig = pseudotl::jsonio::load_json(path)?;
    if out.is_some() {
        cfg.out_dir = out;
    }
    if let Some(seeds) = seed_override()? {
        cfg.seeds = seeds;
    }
    Ok(cfg)
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::MakeTask(a) => {
            let spec = TaskPairSpec {
                dim: a.dim,
                source_classes: a.source_classes,
                target_classes: a.target_classes,
                source_per_class: a.source_per_class,
                target_train: a.target_train,
                target_test: a.target_test,
                mixing: default_mixing(a.target_classes, a.source_classes, a.seed),
                sigma_align: a.sigma_align,
                seed: a.seed,
            };
            let pair = make_task_pair(&spec)?;
            pair.source.save(&a.out.join("source.json"))?;
            pair.target_train.save(&a.out.join("target_train.json"))?;
            pair.target_test.save(&a.out.join("target_test.json"))?;
            println!(
                "wrote {} source / {} target train / {} target test samples ({}d) to {}",
                pair.source.n(),
                pair.target_train.n(),
                pair.target_test.n(),
                a.dim,
                a.out.display()
            );
            Ok(())
        }
        Cmd::TrainSource(a) => {
            let ds = LabeledDataset::load(&a.data)?;
            let cfg = train_cfg(a.epochs, a.batch_size, a.lr, a.milestones);
            let (model, log) = train_source_classifier(&ds, &a.arch, &cfg, a.seed)?;
            model.save(&a.out)?;
            report_log(&log);
            println!("saved classifier ({} classes) to {}", model.output_dim(), a.out.display());
            Ok(())
        }
        Cmd::FitGenerator(a) => {
            let ds = LabeledDataset::load(&a.data)?;
            let mode: ConditioningMode = a.mode.parse()?;
            let gen = ConditionalGenerator::fit(&ds, mode)?;
            gen.save(&a.out)?;
            println!("fitted {} class-conditional Gaussians to {}", gen.num_classes(), a.out.display());
            Ok(())
        }
        Cmd::Pcs(a) => {
            let classifier = MlpClassifier::load(&a.classifier)?;
            let target = LabeledDataset::load(&a.target)?;
            let gen = ConditionalGenerator::load(&a.generator)?;
            let label_fn: LabelFn = a.label_fn.parse()?;
            let labels = pseudo_labels(
                &classifier,
                &target,
                &label_fn,
                SOURCE_SPACE,
                &mut derive_rng(a.seed, &["pcs-labels"]),
            )?;
            if let Some(path) = &a.labels_out {
                labels.save(path)?;
            }
            let pool =
                build_pseudo_dataset(&gen, &labels, a.n, derive_seed(a.seed, &["pcs-build"]))?;
            pool.save(&a.out)?;
            println!(
                "labeled {} target samples, sampled {} synthetic rows to {}",
                labels.len(),
                pool.n(),
                a.out.display()
            );
            Ok(())
        }
        Cmd::Pp(a) => {
            let gen = ConditionalGenerator::load(&a.generator)?;
            let strategy = match a.strategy.parse::<PpStrategyKind>()? {
                PpStrategyKind::Uniform => PretrainStrategy::Uniform,
                PpStrategyKind::Offline => PretrainStrategy::Offline,
                PpStrategyKind::Filtered => {
                    if a.classes.is_empty() {
                        return Err(Error::validation(
                            "the filtered strategy needs --classes",
                        ));
                    }
                    PretrainStrategy::Filtered(a.classes.iter().copied().collect::<BTreeSet<_>>())
                }
                PpStrategyKind::Pcs => {
                    let path = a.labels.as_ref().ok_or_else(|| {
                        Error::validation("the pcs strategy needs --labels")
                    })?;
                    PretrainStrategy::Pcs(PseudoLabelSet::load(path)?)
                }
            };
            let cfg = PretrainConfig {
                steps: a.steps,
                batch_size: a.batch_size,
                optimizer: sgd(a.lr, a.milestones),
                offline_size: a.offline_size,
            };
            let (mut model, losses) = pseudo_pretrain(&a.arch, &gen, &cfg, &strategy, a.seed)?;
            if let Some(classes) = a.swap_classes {
                model = swap_final_layer(
                    &model,
                    classes,
                    a.head_scale,
                    &mut derive_rng(a.seed, &["head"]),
                )?;
            }
            model.save(&a.out)?;
            if let Some(path) = &a.losses_out {
                let mut text = String::from("step,loss\n");
                for (i, l) in losses.iter().enumerate() {
                    text.push_str(&format!("{i},{l}\n"));
                }
                std::fs::write(path, text)?;
            }
            match losses.last() {
                Some(l) => println!("pre-trained {} steps, final loss {l:.4}", losses.len()),
                None => println!("pre-trained 0 steps (checkpoint is the raw init)"),
            }
            println!("saved checkpoint to {}", a.out.display());
            Ok(())
        }
        Cmd::Train(a) => {
            let target = LabeledDataset::load(&a.target)?;
            let init = match &a.init {
                Some(path) => {
                    let loaded = MlpClassifier::load(path)?;
                    if a.swap_head {
                        swap_final_layer(
                            &loaded,
                            target.num_classes(),
                            a.head_scale,
                            &mut derive_rng(a.seed, &["head"]),
                        )?
                    } else {
                        loaded
                    }
                }
                None => {
                    if a.arch.is_empty() {
                        return Err(Error::validation("pass --init or --arch"));
                    }
                    let mut widths = vec![target.dim()];
                    widths.extend_from_slice(&a.arch);
                    widths.push(target.num_classes());
                    init_classifier(&widths, a.seed)?
                }
            };
            let (train, val) = maybe_split(&target, a.val_fraction, a.seed)?;
            let cfg = train_cfg(a.epochs, a.batch_size, a.lr, a.milestones);
            let (model, log) = train_supervised(&init, &train, val.as_ref(), &cfg, a.seed)?;
            model.save(&a.out)?;
            if let Some(path) = &a.metrics {
                write_metrics(path, &log)?;
            }
            report_log(&log);
            println!("saved checkpoint to {}", a.out.display());
            Ok(())
        }
        Cmd::Pssl(a) => {
            let init = MlpClassifier::load(&a.init)?;
            let target = LabeledDataset::load(&a.target)?;
            let pool = UnlabeledDataset::load(&a.pseudo)?;
            let ssl = SslConfig {
                method: a.method.parse::<SslMethod>()?,
                lambda: a.lambda,
                beta: a.beta,
                tau: a.tau,
                unsup_batch: a.unsup_batch,
                augment_strength: a.augment_strength,
            };
            let (train, val) = maybe_split(&target, a.val_fraction, a.seed)?;
            let cfg = train_cfg(a.epochs, a.batch_size, a.lr, a.milestones);
            let (model, log) =
                train_pssl(&init, &train, &pool, val.as_ref(), &ssl, &cfg, a.seed)?;
            model.save(&a.out)?;
            if let Some(path) = &a.metrics {
                write_metrics(path, &log)?;
            }
            report_log(&log);
            println!("saved checkpoint to {}", a.out.display());
            Ok(())
        }
        Cmd::Distill(a) => {
            let teacher = MlpClassifier::load(&a.teacher)?;
            let target = LabeledDataset::load(&a.target)?;
            let hyper = KdHyper { lambda: a.lambda, temperature: a.temp };
            let (train, val) = maybe_split(&target, a.val_fraction, a.seed)?;
            let cfg = train_cfg(a.epochs, a.batch_size, a.lr, a.milestones);
            let (student, log) = kd_train(
                &a.arch,
                &teacher,
                &train,
                val.as_ref(),
                a.method.parse::<KdMethod>()?,
                &hyper,
                &cfg,
                a.seed,
            )?;
            student.save(&a.out)?;
            if let Some(path) = &a.metrics {
                write_metrics(path, &log)?;
            }
            report_log(&log);
            println!("saved student checkpoint to {}", a.out.display());
            Ok(())
        }
        Cmd::Fid(a) => {
            // Unlabeled parsing ignores a labels field, so both dataset
            // kinds load here.
            let x = UnlabeledDataset::load(&a.a)?;
            let y = UnlabeledDataset::load(&a.b)?;
            let fd = frechet_distance(x.features(), y.features())?;
            println!("{fd}");
            Ok(())
        }
        Cmd::Filter(a) => {
            let classifier = MlpClassifier::load(&a.classifier)?;
            let target = LabeledDataset::load(&a.target)?;
            let kept = confidence_filter(&classifier, &target, a.threshold)?;
            println!("{}", pseudotl::jsonio::to_json_string(&kept)?);
            Ok(())
        }
        Cmd::Experiment(a) => {
            let cfg = load_experiment_config(&a.config, a.out)?;
            let records = run_experiment(&cfg)?;
            println!("config {}", config_hash(&cfg));
            for r in &records {
                match (&r.error, r.accuracy) {
                    (None, Some(acc)) => {
                        println!("{:<18} seed {:<3} accuracy {:.4}", r.method, r.seed, acc)
                    }
                    _ => println!(
                        "{:<18} seed {:<3} FAILED: {}",
                        r.method,
                        r.seed,
                        r.error.as_deref().unwrap_or("unknown")
                    ),
                }
            }
            if let Some(dir) = &cfg.out_dir {
                println!("rows written to {}", dir.join("results.csv").display());
            }
            Ok(())
        }
        Cmd::AlignmentStudy(a) => {
            let cfg = load_experiment_config(&a.config, a.out)?;
            let report = alignment_study(&cfg, &a.ladder)?;
            for rung in &report.rungs {
                println!(
                    "sigma {:<6} mean_fd {:<10.4} mean_gain {:+.4}",
                    rung.sigma, rung.mean_fd, rung.mean_gain
                );
            }
            match report.correlation.rho() {
                Some(rho) => println!("spearman(fd, gain) = {rho:.4}"),
                None => println!("spearman(fd, gain) is degenerate (constant ranks)"),
            }
            if let Some(dir) = &cfg.out_dir {
                println!("rows written to {}", dir.join("alignment.csv").display());
            }
            Ok(())
        }
        Cmd::DefaultConfig(a) => {
            let cfg = ExperimentConfig::desk_default(a.seed);
            match &a.out {
                Some(path) => {
                    pseudotl::jsonio::save_json(path, &cfg)?;
                    println!("wrote default config to {}", path.display());
                }
                None => println!("{}", pseudotl::jsonio::to_json_string(&cfg)?),
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_structure_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn seed_override_parses_lists() {
        // Not set in the test environment unless a caller exports it.
        std::env::remove_var("SEED_OVERRIDE");
        assert_eq!(seed_override().unwrap(), None);
        std::env::set_var("SEED_OVERRIDE", "7");
        assert_eq!(seed_override().unwrap(), Some(vec![7]));
        std::env::set_var("SEED_OVERRIDE", "1, 2,3");
        assert_eq!(seed_override().unwrap(), Some(vec![1, 2, 3]));
        std::env::set_var("SEED_OVERRIDE", "x");
        assert!(seed_override().is_err());
        std::env::remove_var("SEED_OVERRIDE");
    }
}
