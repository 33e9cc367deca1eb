//! The `prunelab` command line.
//!
//! Subcommands: `train` (dense teacher), `prune` (mask a checkpoint),
//! `distill` (student from teacher checkpoint), `spectrum` (checkpoint to
//! spectrum CSV), `run` (full pipeline from config), `ablate` (prune-epoch
//! sweep). Every subcommand takes `--config <path>` or `--preset <name>`,
//! plus `--seed` to override the seeds list and `--out` for the output
//! directory. Failures exit nonzero after a single `error: ...` line on
//! stderr; nothing is written until the config validates.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use prunelab_core::distill::distill_train;
use prunelab_core::pruning::{self, PruneRule};
use prunelab_core::seeds::derive_seed;
use prunelab_core::spectral::{network_spectrum, norm_report, pruning_stability, Grid1D};

use crate::checkpoint::Checkpoint;
use crate::config::{preset, ExperimentConfig, PipelineKind};
use crate::error::HarnessError;
use crate::metrics::{dataset_to_csv, write_metrics_csv, write_summary_csv};
use crate::pipeline::{prepare_data, run_ablation_prune_epoch, run_pipeline, PipelineOutput};

#[derive(Parser)]
#[command(name = "prunelab", version, about = "Desk-scale network pruning laboratory")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// JSON experiment config.
    #[arg(long, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Embedded preset name (see README).
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Replace the config's seeds list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "prunelab-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Train the dense network and checkpoint it.
    Train(Common),
    /// Build a mask for a checkpointed network and save the pruned result.
    Prune(Common),
    /// Distill a pruned student from a teacher checkpoint.
    Distill(Common),
    /// Evaluate a checkpointed network's spectrum on the probe grid.
    Spectrum(Common),
    /// Run the configured pipeline over all seeds.
    Run(Common),
    /// Sweep prune epochs and ratios, emitting the accuracy matrix.
    Ablate(Common),
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, HarnessError> {
        let cfg = match (&self.config, &self.preset) {
            (Some(path), None) => ExperimentConfig::from_file(path)?,
            (None, Some(name)) => preset(name)?,
            _ => {
                return Err(HarnessError::Config(
                    "exactly one of --config or --preset is required".into(),
                ))
            }
        };
        Ok(match self.seed {
            Some(s) => cfg.with_single_seed(s),
            None => cfg,
        })
    }
}

/// Entry point; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Clap prints its own usage/help text.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Train(c) => cmd_train(&c),
        Command::Prune(c) => cmd_prune(&c),
        Command::Distill(c) => cmd_distill(&c),
        Command::Spectrum(c) => cmd_spectrum(&c),
        Command::Run(c) => cmd_run(&c),
        Command::Ablate(c) => cmd_ablate(&c),
    }
}

fn ensure_out(dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_outputs(
    out: &Path,
    cfg: &ExperimentConfig,
    output: &PipelineOutput,
) -> Result<(), HarnessError> {
    ensure_out(out)?;
    write_metrics_csv(&out.join("metrics.csv"), &output.probe_bands, &output.rows)?;
    write_summary_csv(&out.join("summary.csv"), &output.summary)?;
    let ckpt_dir = out.join("checkpoints");
    ensure_out(&ckpt_dir)?;
    for run in &output.seed_runs {
        let s = run.seed;
        run.teacher_final
            .save(&ckpt_dir.join(format!("teacher-s{s}-final.wltn")))?;
        if let Some(at_prune) = &run.teacher_at_prune {
            let e = at_prune.epoch;
            at_prune.save(&ckpt_dir.join(format!("teacher-s{s}-ep{e}.wltn")))?;
        }
        if let Some(student) = &run.student_final {
            student.save(&ckpt_dir.join(format!(
                "student-{}-s{s}.wltn",
                cfg.pipeline.as_str()
            )))?;
        }
    }
    if cfg.dump_dataset {
        let data = prepare_data(cfg)?;
        write_text(&out.join("dataset-train.csv"), &dataset_to_csv(&data.train))?;
        write_text(&out.join("dataset-test.csv"), &dataset_to_csv(&data.test))?;
    }
    Ok(())
}

fn cmd_run(c: &Common) -> Result<(), HarnessError> {
    let cfg = c.load()?;
    let output = run_pipeline(&cfg)?;
    write_outputs(&c.out, &cfg, &output)?;
    for s in &output.summary {
        println!(
            "{}: {:.4} +- {:.4} over {} seeds ({} collapsed)",
            s.pipeline, s.mean_test_acc, s.sd_test_acc, s.n_seeds, s.collapsed_runs
        );
    }
    Ok(())
}

fn cmd_train(c: &Common) -> Result<(), HarnessError> {
    let mut cfg = c.load()?;
    cfg.pipeline = PipelineKind::DenseBaseline;
    cfg.prune = None;
    cfg.distill = None;
    cfg.validate()?;
    let output = run_pipeline(&cfg)?;
    write_outputs(&c.out, &cfg, &output)?;
    Ok(())
}

fn cmd_prune(c: &Common) -> Result<(), HarnessError> {
    let cfg = c.load()?;
    let Some(ckpt_path) = &cfg.checkpoint else {
        return Err(HarnessError::Config("prune needs a checkpoint path".into()));
    };
    let Some(prune_cfg) = &cfg.prune else {
        return Err(HarnessError::Config("prune needs a prune section".into()));
    };
    let recipe = prune_cfg.to_recipe();
    let ckpt = Checkpoint::load(ckpt_path)?;
    let net = ckpt.to_network()?;
    let seed = cfg.seeds.first().copied().unwrap_or(0);
    let mask = match recipe.rule {
        PruneRule::Magnitude => pruning::select_magnitude(&net, &recipe)?,
        PruneRule::Random => pruning::select_random(&net, &recipe, derive_seed(seed, "mask"))?,
    };
    let mut pruned = net.clone();
    pruning::apply(&mut pruned, mask)?;

    ensure_out(&c.out)?;
    let rng = ckpt.rng.restore();
    let pruned_ckpt = Checkpoint::from_network(&pruned, None, &rng);
    pruned_ckpt.save(&c.out.join("pruned.wltn"))?;

    let sparsity = pruning::sparsity(pruned.masks().expect("mask attached"));
    let stability = pruning_stability(&net, &pruned)?;
    let report = norm_report(&pruned)?;
    let csv = format!(
        "kept_fraction,removed_fraction,flow_drift,bound_drift,flow_norm,norm_product,max_norm_bound\n{},{},{},{},{},{},{}\n",
        sparsity.kept_fraction,
        sparsity.removed_fraction,
        stability.flow_drift,
        stability.bound_drift,
        report.flow_norm,
        report.norm_product,
        report.max_norm_bound,
    );
    write_text(&c.out.join("prune_report.csv"), &csv)?;
    println!(
        "pruned: kept {:.4} removed {:.4} flow_drift {:.6}",
        sparsity.kept_fraction, sparsity.removed_fraction, stability.flow_drift
    );
    Ok(())
}

fn cmd_distill(c: &Common) -> Result<(), HarnessError> {
    let cfg = c.load()?;
    let Some(teacher_path) = cfg
        .checkpoint
        .as_ref()
        .or(cfg.student_checkpoint.as_ref().and(cfg.checkpoint.as_ref()))
    else {
        return Err(HarnessError::Config("distill needs a teacher checkpoint".into()));
    };
    let Some(distill_section) = &cfg.distill else {
        return Err(HarnessError::Config("distill needs a distill section".into()));
    };
    let teacher = Checkpoint::load(teacher_path)?.to_network()?;
    let seed = cfg.seeds.first().copied().unwrap_or(0);

    let mut student = match &cfg.student_checkpoint {
        Some(path) => Checkpoint::load(path)?.to_network()?,
        None => {
            let Some(prune_cfg) = &cfg.prune else {
                return Err(HarnessError::Config(
                    "distill needs either a student checkpoint or a prune section".into(),
                ));
            };
            let recipe = prune_cfg.to_recipe();
            let mask = match recipe.rule {
                PruneRule::Magnitude => pruning::select_magnitude(&teacher, &recipe)?,
                PruneRule::Random => {
                    pruning::select_random(&teacher, &recipe, derive_seed(seed, "mask"))?
                }
            };
            let mut s = prunelab_core::network::Network::from_parts(
                teacher.spec().clone(),
                teacher.weights().to_vec(),
                None,
                teacher.initial_weights().map(|w| w.to_vec()),
                0,
            )?;
            pruning::apply(&mut s, mask)?;
            s
        }
    };

    let data = prepare_data(&cfg)?;
    let distill_cfg = distill_section.to_config(cfg.epochs_student.max(1));
    let opt_cfg = distill_section.optimizer.as_ref().unwrap_or(&cfg.optimizer);
    let mut opt = prunelab_core::network::OptimizerState::new(
        &student,
        opt_cfg.learning_rate,
        opt_cfg.momentum,
        opt_cfg.weight_decay,
    )?
    .with_schedule(opt_cfg.schedule.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "student"));
    distill_train(
        &mut student,
        &teacher,
        &data.train,
        &distill_cfg,
        &mut opt,
        opt_cfg.batch_size,
        &mut rng,
    )?;
    ensure_out(&c.out)?;
    Checkpoint::from_network(&student, Some(&opt), &rng).save(&c.out.join("student.wltn"))?;
    let eval = student.evaluate(&data.test, data.loss)?;
    println!(
        "distilled: test loss {:.6} acc {}",
        eval.loss,
        eval.accuracy.map_or("n/a".into(), |a| format!("{a:.4}"))
    );
    Ok(())
}

fn cmd_spectrum(c: &Common) -> Result<(), HarnessError> {
    let cfg = c.load()?;
    let Some(ckpt_path) = &cfg.checkpoint else {
        return Err(HarnessError::Config("spectrum needs a checkpoint path".into()));
    };
    let Some(probe) = &cfg.spectral_probe else {
        return Err(HarnessError::Config("spectrum needs a spectral_probe section".into()));
    };
    let net = Checkpoint::load(ckpt_path)?.to_network()?;
    let grid = Grid1D::new(probe.grid.lo, probe.grid.hi, probe.grid.n)?;
    let spectrum = network_spectrum(&net, &grid)?;
    let mut csv = String::from("k,re,im,magnitude\n");
    for k in 0..=spectrum.max_band() {
        let (re, im) = spectrum.amplitude(k);
        use std::fmt::Write as _;
        let _ = writeln!(csv, "{k},{re},{im},{}", spectrum.magnitude(k));
    }
    ensure_out(&c.out)?;
    write_text(&c.out.join("spectrum.csv"), &csv)?;
    println!("spectrum written for {} bins", spectrum.max_band() + 1);
    Ok(())
}

fn cmd_ablate(c: &Common) -> Result<(), HarnessError> {
    let cfg = c.load()?;
    let Some(ablation) = cfg.ablation.clone() else {
        return Err(HarnessError::Config("ablate needs an ablation section".into()));
    };
    let output = run_ablation_prune_epoch(&cfg, &ablation.prune_epochs, &ablation.ratios)?;
    ensure_out(&c.out)?;
    write_text(&c.out.join("ablation_matrix.csv"), &output.matrix_csv())?;
    write_text(&c.out.join("ablation.csv"), &output.long_csv())?;
    println!("{}", output.matrix_csv());
    Ok(())
}
