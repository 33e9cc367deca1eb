//! Experiment pipelines: the two-stage prune-then-distill scheme, its
//! baselines, and the prune-epoch ablation.
//!
//! Every stage draws from its own seed-derived RNG stream, so a stage
//! reproduces identical bytes whether it runs alone or inside a sweep.
//! Seeds within one experiment run in parallel worker threads, capped by
//! the `PRUNELAB_THREADS` environment variable.

use std::collections::BTreeSet;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use prunelab_core::dataset::{
    gen_multifreq, lift_constant, split_train_val, Band, DatasetHandle, MultifreqSpec, SplitTag,
};
use prunelab_core::distill::distill_train;
use prunelab_core::network::{Evaluation, LossKind, Network, OptimizerState};
use prunelab_core::pruning::{self, PruneRecipe, PruneRule};
use prunelab_core::seeds::derive_seed;
use prunelab_core::spectral::{
    network_spectrum, norm_report, pruning_stability, Grid1D, Spectrum,
};

use crate::checkpoint::Checkpoint;
use crate::config::{DatasetConfig, ExperimentConfig, PipelineKind};
use crate::digits;
use crate::error::HarnessError;
use crate::metrics::{summarize, MetricsRow, Phase, SummaryRow};

/// Worker cap for parallel (seed, config) runs.
pub fn thread_cap() -> usize {
    std::env::var("PRUNELAB_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn pool(jobs: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(thread_cap().min(jobs.max(1)))
        .build()
        .expect("thread pool")
}

fn stage_rng(seed: u64, label: &str) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(derive_seed(seed, label))
}

/// Spectral probe resolved against the dataset's analytic target.
pub struct ProbeContext {
    pub grid: Grid1D,
    pub bands: Vec<usize>,
    pub delta: f64,
    pub target: Spectrum,
}

/// Materialized train/val/test splits plus task metadata.
pub struct PreparedData {
    pub train: DatasetHandle,
    pub val: DatasetHandle,
    pub test: DatasetHandle,
    pub loss: LossKind,
    pub classes: Option<usize>,
    pub probe: Option<ProbeContext>,
}

/// Builds the dataset an experiment trains on. Validation is exactly 10%
/// of the training rows, seeded from the dataset seed.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData, HarnessError> {
    match &cfg.dataset {
        DatasetConfig::Digits { seed, .. } => {
            let spec = cfg.dataset.digits_spec().expect("digits config");
            let (train_full, test) = digits::gen_digits(&spec)?;
            let (train, val) = split_train_val(&train_full, 0.10, derive_seed(*seed, "val-split"))?;
            Ok(PreparedData {
                train,
                val,
                test,
                loss: LossKind::CrossEntropy,
                classes: Some(digits::CLASSES),
                probe: None,
            })
        }
        DatasetConfig::Multifreq {
            bands,
            n_samples,
            noise_sd,
            seed,
            domain,
            lift,
            test_fraction,
        } => {
            let spec = MultifreqSpec {
                bands: bands
                    .iter()
                    .map(|&(frequency, amplitude, phase)| Band {
                        frequency,
                        amplitude,
                        phase,
                    })
                    .collect(),
                n_samples: *n_samples,
                noise_sd: *noise_sd,
                seed: *seed,
                domain: *domain,
            };
            let full = gen_multifreq(&spec)?;
            let full = if *lift { lift_constant(&full) } else { full };
            let (rest, test) =
                split_train_val(&full, *test_fraction, derive_seed(*seed, "test-split"))?;
            let test = test.with_split(SplitTag::Test);
            let (train, val) = split_train_val(&rest, 0.10, derive_seed(*seed, "val-split"))?;
            let probe = match &cfg.spectral_probe {
                Some(p) => {
                    let grid = Grid1D::new(p.grid.lo, p.grid.hi, p.grid.n)?;
                    let target = spec.analytic_spectrum(&grid)?;
                    Some(ProbeContext {
                        grid,
                        bands: p.bands.clone(),
                        delta: p.delta,
                        target,
                    })
                }
                None => None,
            };
            Ok(PreparedData {
                train,
                val,
                test,
                loss: LossKind::Mse,
                classes: None,
                probe,
            })
        }
        DatasetConfig::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
        } => {
            let train_full = crate::idx::load_idx(train_images, train_labels)?;
            let test = crate::idx::load_idx(test_images, test_labels)?.with_split(SplitTag::Test);
            let classes = match &train_full.targets {
                prunelab_core::dataset::Targets::Labels { classes, .. } => Some(*classes),
                _ => None,
            };
            let (train, val) = split_train_val(&train_full, 0.10, derive_seed(0x1d, "val-split"))?;
            Ok(PreparedData {
                train,
                val,
                test,
                loss: LossKind::CrossEntropy,
                classes,
                probe: None,
            })
        }
    }
}

fn new_optimizer(cfg: &ExperimentConfig, net: &Network) -> Result<OptimizerState, HarnessError> {
    let o = &cfg.optimizer;
    Ok(OptimizerState::new(net, o.learning_rate, o.momentum, o.weight_decay)?
        .with_schedule(o.schedule.clone()))
}

/// Student-stage optimizer: the distill section's overrides when present,
/// the main settings otherwise.
fn student_optimizer(
    cfg: &ExperimentConfig,
    net: &Network,
) -> Result<(OptimizerState, usize), HarnessError> {
    let o = cfg
        .distill
        .as_ref()
        .and_then(|d| d.optimizer.as_ref())
        .unwrap_or(&cfg.optimizer);
    Ok((
        OptimizerState::new(net, o.learning_rate, o.momentum, o.weight_decay)?
            .with_schedule(o.schedule.clone()),
        o.batch_size,
    ))
}

/// Measures one epoch row: held-out evaluations, mask accounting, norm
/// chain, drift against the reference, and probe band errors.
fn measure_row(
    data: &PreparedData,
    pipeline: &str,
    seed: u64,
    phase: Phase,
    net: &Network,
    train_metrics: Evaluation,
    reference: Option<&Network>,
) -> Result<MetricsRow, HarnessError> {
    let val = net.evaluate(&data.val, data.loss)?;
    let test = net.evaluate(&data.test, data.loss)?;
    let removed_fraction = net
        .masks()
        .map(|m| pruning::sparsity(m).removed_fraction)
        .unwrap_or(0.0);
    let report = norm_report(net)?;
    let flow_drift = match reference {
        Some(r) => Some(pruning_stability(r, net)?.flow_drift),
        None => None,
    };
    let band_errors = match &data.probe {
        Some(p) => {
            let spectrum = network_spectrum(net, &p.grid)?;
            p.bands
                .iter()
                .map(|&k| {
                    let (re, im) = spectrum.amplitude(k);
                    let (gre, gim) = p.target.amplitude(k);
                    ((re - gre).powi(2) + (im - gim).powi(2)).sqrt()
                        / (p.target.magnitude(k) + 1e-12)
                })
                .collect()
        }
        None => Vec::new(),
    };
    Ok(MetricsRow {
        run_id: format!("{pipeline}-s{seed}"),
        pipeline: pipeline.to_string(),
        seed,
        phase,
        epoch: net.epoch(),
        train_loss: train_metrics.loss,
        train_acc: train_metrics.accuracy,
        val_loss: val.loss,
        val_acc: val.accuracy,
        test_loss: test.loss,
        test_acc: test.accuracy,
        removed_fraction,
        flow_norm: report.flow_norm,
        norm_product: report.norm_product,
        max_norm_bound: report.max_norm_bound,
        flow_drift,
        band_errors,
    })
}

/// A trained teacher with checkpoints at the requested epochs.
pub struct TeacherRun {
    pub net: Network,
    pub rows: Vec<MetricsRow>,
    /// `(epoch, checkpoint)` at each requested snapshot epoch.
    pub snapshots: Vec<(usize, Checkpoint)>,
    pub final_checkpoint: Checkpoint,
}

/// Trains the dense teacher, checkpointing at every epoch in `snapshots`
/// (and at the end). Snapshot epoch `e` means the state after `e` full
/// epochs, so epoch 0 is the initialization.
pub fn train_teacher(
    cfg: &ExperimentConfig,
    pipeline: &str,
    seed: u64,
    data: &PreparedData,
    snapshots: &BTreeSet<usize>,
) -> Result<TeacherRun, HarnessError> {
    let spec = cfg.network.to_spec(derive_seed(seed, "init"));
    let mut net = Network::init(spec)?;
    let mut opt = new_optimizer(cfg, &net)?;
    let mut rng = stage_rng(seed, "teacher");
    let mut rows = Vec::new();
    let mut snaps = Vec::new();
    for epoch in 0..=cfg.epochs_teacher {
        if snapshots.contains(&epoch) {
            snaps.push((epoch, Checkpoint::from_network(&net, Some(&opt), &rng)));
        }
        if epoch == cfg.epochs_teacher {
            break;
        }
        let train_metrics = net.train_epoch(
            &data.train,
            &mut opt,
            data.loss,
            cfg.optimizer.batch_size,
            &mut rng,
        )?;
        rows.push(measure_row(
            data,
            pipeline,
            seed,
            Phase::Teacher,
            &net,
            train_metrics,
            None,
        )?);
    }
    let final_checkpoint = Checkpoint::from_network(&net, Some(&opt), &rng);
    Ok(TeacherRun {
        net,
        rows,
        snapshots: snaps,
        final_checkpoint,
    })
}

/// Fresh student carrying the given weights, unmasked, at epoch zero.
fn student_from(net: &Network, weights: Vec<prunelab_core::Matrix>) -> Result<Network, HarnessError> {
    Ok(Network::from_parts(
        net.spec().clone(),
        weights,
        None,
        net.initial_weights().map(|w| w.to_vec()),
        0,
    )?)
}

/// Artifacts kept per seed for checkpoint emission.
pub struct SeedRun {
    pub seed: u64,
    pub teacher_final: Checkpoint,
    pub teacher_at_prune: Option<Checkpoint>,
    pub student_final: Option<Checkpoint>,
}

/// Output of one pipeline over all configured seeds.
pub struct PipelineOutput {
    pub rows: Vec<MetricsRow>,
    pub seed_runs: Vec<SeedRun>,
    pub summary: Vec<SummaryRow>,
    pub probe_bands: Vec<usize>,
    pub classes: Option<usize>,
    pub test_n: usize,
}

/// Dispatches on the configured pipeline.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<PipelineOutput, HarnessError> {
    match cfg.pipeline {
        PipelineKind::Wilton => run_wilton(cfg),
        _ => run_baseline(cfg),
    }
}

/// The two-stage scheme: train the teacher, build a magnitude mask from
/// its prune-epoch weights, start the student from those masked weights,
/// and distill from the final teacher.
pub fn run_wilton(cfg: &ExperimentConfig) -> Result<PipelineOutput, HarnessError> {
    if cfg.pipeline != PipelineKind::Wilton {
        return Err(HarnessError::Config("run_wilton needs pipeline=wilton".into()));
    }
    if cfg.teacher_checkpoint.is_some() {
        return Err(HarnessError::Config(
            "wilton trains its own teacher; teacher_checkpoint is for baselines".into(),
        ));
    }
    let data = prepare_data(cfg)?;
    let prune = cfg.prune.as_ref().expect("validated");
    let recipe = prune.to_recipe();
    let distill_cfg = cfg
        .distill
        .as_ref()
        .expect("validated")
        .to_config(cfg.epochs_student);

    let per_seed = |&seed: &u64| -> Result<(Vec<MetricsRow>, SeedRun), HarnessError> {
        let mut wanted: BTreeSet<usize> = cfg.snapshot_epochs.iter().copied().collect();
        wanted.insert(prune.prune_epoch);
        let teacher = train_teacher(cfg, "wilton", seed, &data, &wanted)?;
        let mut rows = teacher.rows;

        let (_, prune_ckpt) = teacher
            .snapshots
            .iter()
            .find(|(e, _)| *e == prune.prune_epoch)
            .expect("requested snapshot");
        let prune_net = prune_ckpt.to_network()?;
        let mask = pruning::select_magnitude(&prune_net, &recipe)?;
        let mut student = student_from(&teacher.net, prune_net.weights().to_vec())?;
        pruning::apply(&mut student, mask)?;

        let (mut opt, batch_size) = student_optimizer(cfg, &student)?;
        let mut rng = stage_rng(seed, "student");
        let mut epoch_cfg = distill_cfg;
        epoch_cfg.epochs = 1;
        for _ in 0..cfg.epochs_student {
            let m = distill_train(
                &mut student,
                &teacher.net,
                &data.train,
                &epoch_cfg,
                &mut opt,
                batch_size,
                &mut rng,
            )?;
            rows.push(measure_row(
                &data,
                "wilton",
                seed,
                Phase::Student,
                &student,
                m[0],
                Some(&teacher.net),
            )?);
        }
        let student_final = Checkpoint::from_network(&student, Some(&opt), &rng);
        Ok((
            rows,
            SeedRun {
                seed,
                teacher_final: teacher.final_checkpoint,
                teacher_at_prune: Some(prune_ckpt.clone()),
                student_final: Some(student_final),
            },
        ))
    };

    let results: Result<Vec<_>, _> =
        pool(cfg.seeds.len()).install(|| cfg.seeds.par_iter().map(per_seed).collect());
    assemble(cfg, &data, results?)
}

/// Loads or trains the teacher for a baseline pipeline.
fn baseline_teacher(
    cfg: &ExperimentConfig,
    pipeline: &str,
    seed: u64,
    data: &PreparedData,
) -> Result<(Network, Checkpoint, Vec<MetricsRow>), HarnessError> {
    match &cfg.teacher_checkpoint {
        Some(template) => {
            let path = template.replace("{seed}", &seed.to_string());
            let ckpt = Checkpoint::load(std::path::Path::new(&path))?;
            let net = ckpt.to_network()?;
            Ok((net, ckpt, Vec::new()))
        }
        None => {
            let run = train_teacher(cfg, pipeline, seed, data, &BTreeSet::new())?;
            Ok((run.net, run.final_checkpoint, run.rows))
        }
    }
}

/// Vanilla magnitude pruning, lottery-ticket rewinding, random pruning,
/// and the dense baseline.
pub fn run_baseline(cfg: &ExperimentConfig) -> Result<PipelineOutput, HarnessError> {
    if cfg.pipeline == PipelineKind::Wilton {
        return Err(HarnessError::Config("run_baseline got pipeline=wilton".into()));
    }
    let data = prepare_data(cfg)?;
    let pipeline = cfg.pipeline.as_str();

    let per_seed = |&seed: &u64| -> Result<(Vec<MetricsRow>, SeedRun), HarnessError> {
        let (teacher, teacher_ckpt, mut rows) = baseline_teacher(cfg, pipeline, seed, &data)?;
        if rows.is_empty() && cfg.pipeline == PipelineKind::DenseBaseline {
            // Loaded dense teacher: evaluate it once so the run has a row.
            let eval = teacher.evaluate(&data.train, data.loss)?;
            rows.push(measure_row(&data, pipeline, seed, Phase::Teacher, &teacher, eval, None)?);
        }
        if cfg.pipeline == PipelineKind::DenseBaseline {
            return Ok((
                rows,
                SeedRun {
                    seed,
                    teacher_final: teacher_ckpt,
                    teacher_at_prune: None,
                    student_final: None,
                },
            ));
        }

        let recipe = cfg.prune.as_ref().expect("validated").to_recipe();
        let mut student = match cfg.pipeline {
            PipelineKind::VanillaMbp => {
                let mask = pruning::select_magnitude(&teacher, &recipe)?;
                let mut s = student_from(&teacher, teacher.weights().to_vec())?;
                pruning::apply(&mut s, mask)?;
                s
            }
            PipelineKind::LotteryTicket => {
                let mask = pruning::select_magnitude(
                    &teacher,
                    &PruneRecipe {
                        rule: PruneRule::Magnitude,
                        ..recipe
                    },
                )?;
                let mut s = student_from(&teacher, teacher.weights().to_vec())?;
                pruning::rewind(&mut s, mask)?;
                s
            }
            PipelineKind::RandomPrune => {
                let mask = pruning::select_random(&teacher, &recipe, derive_seed(seed, "mask"))?;
                let mut s = student_from(&teacher, teacher.weights().to_vec())?;
                pruning::apply(&mut s, mask)?;
                s
            }
            _ => unreachable!("dense handled above, wilton rejected"),
        };

        let mut opt = new_optimizer(cfg, &student)?;
        let mut rng = stage_rng(seed, "student");
        for _ in 0..cfg.epochs_student {
            let m = student.train_epoch(
                &data.train,
                &mut opt,
                data.loss,
                cfg.optimizer.batch_size,
                &mut rng,
            )?;
            rows.push(measure_row(
                &data,
                pipeline,
                seed,
                Phase::Student,
                &student,
                m,
                Some(&teacher),
            )?);
        }
        let student_final = Checkpoint::from_network(&student, Some(&opt), &rng);
        Ok((
            rows,
            SeedRun {
                seed,
                teacher_final: teacher_ckpt,
                teacher_at_prune: None,
                student_final: Some(student_final),
            },
        ))
    };

    let results: Result<Vec<_>, _> =
        pool(cfg.seeds.len()).install(|| cfg.seeds.par_iter().map(per_seed).collect());
    assemble(cfg, &data, results?)
}

fn assemble(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    results: Vec<(Vec<MetricsRow>, SeedRun)>,
) -> Result<PipelineOutput, HarnessError> {
    let mut rows = Vec::new();
    let mut seed_runs = Vec::new();
    for (seed_rows, seed_run) in results {
        rows.extend(seed_rows);
        seed_runs.push(seed_run);
    }
    let summary = summarize(&rows, data.classes, data.test.len());
    Ok(PipelineOutput {
        rows,
        seed_runs,
        summary,
        probe_bands: cfg
            .spectral_probe
            .as_ref()
            .map(|p| p.bands.clone())
            .unwrap_or_default(),
        classes: data.classes,
        test_n: data.test.len(),
    })
}

/// One cell of the prune-epoch ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub prune_epoch: usize,
    pub ratio: f64,
    pub seed: u64,
    pub final_test_acc: f64,
}

pub struct AblationOutput {
    pub cells: Vec<AblationCell>,
    pub prune_epochs: Vec<usize>,
    pub ratios: Vec<f64>,
}

impl AblationOutput {
    /// Median final accuracy per `(ratio, prune_epoch)` pair, shaped with
    /// one row per ratio and one column per epoch.
    pub fn matrix_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("ratio");
        for e in &self.prune_epochs {
            let _ = write!(out, ",epoch_{e}");
        }
        out.push('\n');
        for &ratio in &self.ratios {
            let _ = write!(out, "{ratio}");
            for &epoch in &self.prune_epochs {
                let mut accs: Vec<f64> = self
                    .cells
                    .iter()
                    .filter(|c| c.prune_epoch == epoch && c.ratio == ratio)
                    .map(|c| c.final_test_acc)
                    .collect();
                accs.sort_by(|a, b| a.partial_cmp(b).expect("finite accuracies"));
                let _ = write!(out, ",{}", median_of_sorted(&accs));
            }
            out.push('\n');
        }
        out
    }

    pub fn long_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("prune_epoch,ratio,seed,final_test_acc\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                c.prune_epoch, c.ratio, c.seed, c.final_test_acc
            );
        }
        out
    }
}

pub fn median_of_sorted(sorted: &[f64]) -> f64 {
    assert!(!sorted.is_empty(), "median of empty slice");
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Runs the two-stage scheme once per `(prune_epoch, ratio)` pair, sharing
/// one teacher per seed (the teacher does not depend on either knob).
pub fn run_ablation_prune_epoch(
    cfg: &ExperimentConfig,
    prune_epochs: &[usize],
    ratios: &[f64],
) -> Result<AblationOutput, HarnessError> {
    if prune_epochs.is_empty() || ratios.is_empty() {
        return Err(HarnessError::Config("ablation needs epochs and ratios".into()));
    }
    if let Some(&bad) = prune_epochs.iter().find(|&&e| e > cfg.epochs_teacher) {
        return Err(HarnessError::Config(format!(
            "ablation prune epoch {bad} beyond epochs_teacher {}",
            cfg.epochs_teacher
        )));
    }
    let data = prepare_data(cfg)?;
    let distill_cfg = cfg
        .distill
        .as_ref()
        .ok_or_else(|| HarnessError::Config("ablation requires a distill section".into()))?
        .to_config(cfg.epochs_student);
    let base_recipe = cfg
        .prune
        .as_ref()
        .ok_or_else(|| HarnessError::Config("ablation requires a prune section".into()))?
        .to_recipe();

    let per_seed = |&seed: &u64| -> Result<Vec<AblationCell>, HarnessError> {
        let wanted: BTreeSet<usize> = prune_epochs.iter().copied().collect();
        let teacher = train_teacher(cfg, "wilton", seed, &data, &wanted)?;
        let mut cells = Vec::new();
        for &prune_epoch in prune_epochs {
            let (_, ckpt) = teacher
                .snapshots
                .iter()
                .find(|(e, _)| *e == prune_epoch)
                .expect("requested snapshot");
            let prune_net = ckpt.to_network()?;
            for &ratio in ratios {
                let recipe = PruneRecipe {
                    ratio,
                    prune_epoch,
                    ..base_recipe
                };
                let mask = pruning::select_magnitude(&prune_net, &recipe)?;
                let mut student = student_from(&teacher.net, prune_net.weights().to_vec())?;
                pruning::apply(&mut student, mask)?;
                let (mut opt, batch_size) = student_optimizer(cfg, &student)?;
                let mut rng = stage_rng(seed, "student");
                distill_train(
                    &mut student,
                    &teacher.net,
                    &data.train,
                    &distill_cfg,
                    &mut opt,
                    batch_size,
                    &mut rng,
                )?;
                let acc = student
                    .evaluate(&data.test, data.loss)?
                    .accuracy
                    .unwrap_or(f64::NAN);
                cells.push(AblationCell {
                    prune_epoch,
                    ratio,
                    seed,
                    final_test_acc: acc,
                });
            }
        }
        Ok(cells)
    };

    let results: Result<Vec<_>, _> =
        pool(cfg.seeds.len()).install(|| cfg.seeds.par_iter().map(per_seed).collect());
    let cells = results?.into_iter().flatten().collect();
    Ok(AblationOutput {
        cells,
        prune_epochs: prune_epochs.to_vec(),
        ratios: ratios.to_vec(),
    })
}
