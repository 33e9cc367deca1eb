//! JSON experiment configuration.
//!
//! Configs deserialize strictly: unknown keys are errors, and
//! [`ExperimentConfig::validate`] checks every cross-field requirement
//! before any compute starts. Named presets ship embedded in the binary.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use prunelab_core::distill::DistillConfig;
use prunelab_core::network::{InitScheme, NetworkSpec};
use prunelab_core::pruning::{PruneRecipe, PruneRule, PruneScope, TieBreak};
use prunelab_core::spectral::Grid1D;

use crate::digits::{self, DigitsSpec};
use crate::error::HarnessError;

/// Which experiment pipeline a `run` executes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineKind {
    /// Two-stage: magnitude mask at the prune epoch, then distillation
    /// from the fully trained teacher.
    Wilton,
    /// Magnitude mask on the final teacher, plain retraining.
    VanillaMbp,
    /// Magnitude mask on the final teacher, rewind to initial weights,
    /// plain retraining.
    LotteryTicket,
    /// Random mask at the same ratio, plain retraining.
    RandomPrune,
    /// No pruning: the trained teacher is the result.
    DenseBaseline,
}

impl PipelineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Wilton => "wilton",
            Self::VanillaMbp => "vanilla-mbp",
            Self::LotteryTicket => "lottery-ticket",
            Self::RandomPrune => "random-prune",
            Self::DenseBaseline => "dense-baseline",
        }
    }

    pub fn needs_prune(self) -> bool {
        !matches!(self, Self::DenseBaseline)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitName {
    HeNormal,
    UniformScaled,
}

impl From<InitName> for InitScheme {
    fn from(v: InitName) -> Self {
        match v {
            InitName::HeNormal => InitScheme::HeNormal,
            InitName::UniformScaled => InitScheme::UniformScaled,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub layer_widths: Vec<usize>,
    pub init: InitName,
}

impl NetworkConfig {
    /// Concrete spec for one run seed.
    pub fn to_spec(&self, init_seed: u64) -> NetworkSpec {
        NetworkSpec {
            input_dim: self.input_dim,
            layer_widths: self.layer_widths.clone(),
            seed: init_seed,
            init: self.init.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Synthetic seven-segment digit classification.
    Digits {
        #[serde(default = "default_digits_train")]
        train: usize,
        #[serde(default = "default_digits_test")]
        test: usize,
        #[serde(default = "default_digits_noise")]
        noise_sd: f64,
        #[serde(default = "default_data_seed")]
        seed: u64,
        #[serde(default = "default_digits_shift")]
        max_shift: i32,
    },
    /// Seeded sum-of-sinusoids 1-D regression.
    Multifreq {
        /// `(frequency, amplitude, phase)` triples.
        bands: Vec<(usize, f64, f64)>,
        n_samples: usize,
        #[serde(default)]
        noise_sd: f64,
        #[serde(default = "default_data_seed")]
        seed: u64,
        domain: (f64, f64),
        /// Present inputs as `[x, 1]` so the bias-free network gets
        /// first-layer offsets.
        #[serde(default = "default_true")]
        lift: bool,
        /// Held-out test fraction, split off before validation.
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
    /// External IDX image/label files.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
}

fn default_digits_train() -> usize {
    8000
}
fn default_digits_test() -> usize {
    2000
}
fn default_digits_noise() -> f64 {
    0.35
}
fn default_digits_shift() -> i32 {
    4
}
fn default_data_seed() -> u64 {
    7777
}
fn default_true() -> bool {
    true
}
fn default_test_fraction() -> f64 {
    0.25
}

impl DatasetConfig {
    pub fn digits_spec(&self) -> Option<DigitsSpec> {
        match self {
            Self::Digits {
                train,
                test,
                noise_sd,
                seed,
                max_shift,
            } => Some(DigitsSpec {
                train: *train,
                test: *test,
                noise_sd: *noise_sd,
                seed: *seed,
                max_shift: *max_shift,
            }),
            _ => None,
        }
    }

    /// Input width the network must accept.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            Self::Digits { .. } => Some(digits::SIDE * digits::SIDE),
            Self::Multifreq { lift, .. } => Some(if *lift { 2 } else { 1 }),
            Self::Idx { .. } => None, // known only after loading
        }
    }

    pub fn is_classification(&self) -> bool {
        !matches!(self, Self::Multifreq { .. })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// `(epoch, multiplier)` pairs applied cumulatively from that epoch on.
    #[serde(default)]
    pub schedule: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeName {
    Global,
    PerLayer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleName {
    Magnitude,
    Random,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PruneConfig {
    /// Fraction of weights removed, in `[0, 1)`.
    pub ratio: f64,
    #[serde(default = "default_scope")]
    pub scope: ScopeName,
    #[serde(default = "default_rule")]
    pub rule: RuleName,
    pub prune_epoch: usize,
}

fn default_scope() -> ScopeName {
    ScopeName::Global
}
fn default_rule() -> RuleName {
    RuleName::Magnitude
}

impl PruneConfig {
    pub fn to_recipe(&self) -> PruneRecipe {
        PruneRecipe {
            ratio: self.ratio,
            scope: match self.scope {
                ScopeName::Global => PruneScope::Global,
                ScopeName::PerLayer => PruneScope::PerLayer,
            },
            rule: match self.rule {
                RuleName::Magnitude => PruneRule::Magnitude,
                RuleName::Random => PruneRule::Random,
            },
            prune_epoch: self.prune_epoch,
            tie_break: TieBreak::StableIndex,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistillSection {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Optional optimizer overrides for the student stage; the teacher's
    /// settings apply when absent.
    #[serde(default)]
    pub optimizer: Option<OptimizerConfig>,
}

fn default_temperature() -> f64 {
    4.0
}
fn default_alpha() -> f64 {
    0.9
}

impl DistillSection {
    pub fn to_config(&self, epochs: usize) -> DistillConfig {
        DistillConfig {
            temperature: self.temperature,
            alpha: self.alpha,
            epochs,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub grid: GridConfig,
    pub bands: Vec<usize>,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

fn default_delta() -> f64 {
    0.1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationConfig {
    pub prune_epochs: Vec<usize>,
    pub ratios: Vec<f64>,
}

/// A complete declarative experiment description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub pipeline: PipelineKind,
    pub network: NetworkConfig,
    pub dataset: DatasetConfig,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub prune: Option<PruneConfig>,
    #[serde(default)]
    pub distill: Option<DistillSection>,
    pub seeds: Vec<u64>,
    pub epochs_teacher: usize,
    pub epochs_student: usize,
    #[serde(default)]
    pub spectral_probe: Option<ProbeConfig>,
    /// Loads the teacher instead of training it. `{seed}` expands to the
    /// run seed. Supported by the baseline pipelines.
    #[serde(default)]
    pub teacher_checkpoint: Option<String>,
    /// Input checkpoint for the `prune`, `distill`, and `spectrum`
    /// subcommands.
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    /// Optional pre-pruned student for the `distill` subcommand.
    #[serde(default)]
    pub student_checkpoint: Option<PathBuf>,
    /// Extra teacher epochs to checkpoint, beyond the prune epoch.
    #[serde(default)]
    pub snapshot_epochs: Vec<usize>,
    #[serde(default)]
    pub ablation: Option<AblationConfig>,
    /// Also write the generated dataset as CSV next to the metrics.
    #[serde(default)]
    pub dump_dataset: bool,
}

impl ExperimentConfig {
    pub fn from_json(json: &str) -> Result<Self, HarnessError> {
        let cfg: Self =
            serde_json::from_str(json).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let json = std::fs::read_to_string(path).map_err(|e| HarnessError::ConfigIo {
            path: path.to_path_buf(),
            detail: e.to_string(),
        })?;
        Self::from_json(&json)
    }

    /// Total validation: every range and cross-field requirement, before
    /// any compute.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Config(msg));

        if self.seeds.is_empty() {
            return fail("seeds list is empty".into());
        }
        if self.epochs_teacher == 0 {
            return fail("epochs_teacher must be positive".into());
        }
        if self.network.layer_widths.is_empty()
            || self.network.layer_widths.contains(&0)
            || self.network.input_dim == 0
        {
            return fail("network widths and input_dim must be positive".into());
        }
        if let Some(dim) = self.dataset.input_dim() {
            if self.network.input_dim != dim {
                return fail(format!(
                    "network input_dim {} does not match dataset width {dim}",
                    self.network.input_dim
                ));
            }
        }
        if self.dataset.is_classification() {
            let out = *self.network.layer_widths.last().expect("nonempty");
            if matches!(self.dataset, DatasetConfig::Digits { .. }) && out != digits::CLASSES {
                return fail(format!(
                    "digits need {} output units, network has {out}",
                    digits::CLASSES
                ));
            }
        } else if *self.network.layer_widths.last().expect("nonempty") != 1 {
            return fail("regression needs exactly one output unit".into());
        }

        match &self.dataset {
            DatasetConfig::Digits { train, test, noise_sd, max_shift, .. } => {
                if *train < 20 || *test < 20 {
                    return fail("digits splits must hold at least 20 samples".into());
                }
                if !(*noise_sd >= 0.0) || *max_shift < 0 {
                    return fail("digits noise_sd/max_shift out of range".into());
                }
            }
            DatasetConfig::Multifreq { bands, n_samples, noise_sd, domain, test_fraction, .. } => {
                if bands.is_empty() {
                    return fail("multifreq needs at least one band".into());
                }
                for (i, b) in bands.iter().enumerate() {
                    if bands[..i].iter().any(|o| o.0 == b.0) {
                        return fail(format!("duplicate multifreq band {}", b.0));
                    }
                }
                if *n_samples < 16 {
                    return fail("multifreq needs n_samples >= 16".into());
                }
                if !(*noise_sd >= 0.0) || !(domain.0 < domain.1) {
                    return fail("multifreq noise/domain out of range".into());
                }
                if !(0.0..0.9).contains(test_fraction) {
                    return fail("multifreq test_fraction outside [0, 0.9)".into());
                }
            }
            DatasetConfig::Idx { .. } => {}
        }

        let check_optimizer = |o: &OptimizerConfig, which: &str| -> Result<(), HarnessError> {
            if !(o.learning_rate > 0.0 && o.learning_rate.is_finite()) {
                return Err(HarnessError::Config(format!(
                    "{which} learning_rate {} out of range",
                    o.learning_rate
                )));
            }
            if !(0.0..1.0).contains(&o.momentum) {
                return Err(HarnessError::Config(format!(
                    "{which} momentum {} outside [0, 1)",
                    o.momentum
                )));
            }
            if !(o.weight_decay >= 0.0 && o.weight_decay.is_finite()) {
                return Err(HarnessError::Config(format!(
                    "{which} weight_decay {} out of range",
                    o.weight_decay
                )));
            }
            if o.batch_size == 0 {
                return Err(HarnessError::Config(format!("{which} batch_size must be positive")));
            }
            if o.schedule.iter().any(|(_, m)| !(m.is_finite() && *m > 0.0)) {
                return Err(HarnessError::Config(format!(
                    "{which} schedule multipliers must be positive"
                )));
            }
            Ok(())
        };
        check_optimizer(&self.optimizer, "optimizer")?;
        if let Some(d) = &self.distill {
            if let Some(o) = &d.optimizer {
                check_optimizer(o, "distill optimizer")?;
            }
        }

        if self.pipeline.needs_prune() {
            let Some(prune) = &self.prune else {
                return fail(format!(
                    "pipeline {} requires a prune section",
                    self.pipeline.as_str()
                ));
            };
            if !(0.0..1.0).contains(&prune.ratio) {
                return fail(format!("prune ratio {} outside [0, 1)", prune.ratio));
            }
            if prune.prune_epoch > self.epochs_teacher {
                return fail(format!(
                    "prune_epoch {} beyond epochs_teacher {}",
                    prune.prune_epoch, self.epochs_teacher
                ));
            }
            if self.epochs_student == 0 {
                return fail("epochs_student must be positive for pruning pipelines".into());
            }
        }
        if matches!(self.pipeline, PipelineKind::Wilton) {
            let Some(d) = &self.distill else {
                return fail("wilton requires a distill section".into());
            };
            d.to_config(self.epochs_student.max(1))
                .validate()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
            if let Some(p) = &self.prune {
                if p.rule != RuleName::Magnitude {
                    return fail("wilton prunes by magnitude".into());
                }
            }
        }
        if let Some(probe) = &self.spectral_probe {
            Grid1D::new(probe.grid.lo, probe.grid.hi, probe.grid.n)
                .map_err(|e| HarnessError::Config(format!("probe grid: {e}")))?;
            if probe.bands.is_empty() {
                return fail("probe bands list is empty".into());
            }
            if probe.bands.iter().any(|&b| b == 0 || b >= probe.grid.n / 2) {
                return fail("probe bands must satisfy 1 <= k < n/2".into());
            }
            if !(probe.delta > 0.0) {
                return fail("probe delta must be positive".into());
            }
            if self.dataset.is_classification() {
                return fail("spectral probe needs a regression dataset".into());
            }
        }
        if let Some(ab) = &self.ablation {
            if ab.prune_epochs.is_empty() || ab.ratios.is_empty() {
                return fail("ablation needs prune_epochs and ratios".into());
            }
            if ab.prune_epochs.iter().any(|&e| e > self.epochs_teacher) {
                return fail("ablation prune epoch beyond epochs_teacher".into());
            }
            if ab.ratios.iter().any(|r| !(0.0..1.0).contains(r)) {
                return fail("ablation ratios must lie in [0, 1)".into());
            }
        }
        Ok(())
    }

    /// Replaces the seeds list with a single seed (the `--seed` flag).
    pub fn with_single_seed(mut self, seed: u64) -> Self {
        self.seeds = vec![seed];
        self
    }
}

/// Embedded presets reachable through `--preset`.
pub const PRESETS: &[(&str, &str)] = &[
    ("wilton-desk", include_str!("../presets/wilton-desk.json")),
    ("dense-desk", include_str!("../presets/dense-desk.json")),
    ("freq-probe", include_str!("../presets/freq-probe.json")),
    ("ablation-desk", include_str!("../presets/ablation-desk.json")),
    ("paper-recipe", include_str!("../presets/paper-recipe.json")),
];

pub fn preset(name: &str) -> Result<ExperimentConfig, HarnessError> {
    let Some((_, json)) = PRESETS.iter().find(|(n, _)| *n == name) else {
        let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
        return Err(HarnessError::Config(format!(
            "unknown preset {name}; available: {}",
            names.join(", ")
        )));
    };
    ExperimentConfig::from_json(json)
}
