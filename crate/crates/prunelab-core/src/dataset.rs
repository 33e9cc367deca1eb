//! In-memory datasets and seeded synthetic generators.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use rand::Rng;
use rand::SeedableRng;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::spectral::{Grid1D, Spectrum};
use crate::tensor::Matrix;

/// Which portion of an experiment a dataset feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

/// Supervision targets: integer class labels or real-valued rows.
#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Labels { labels: Vec<usize>, classes: usize },
    Values(Matrix),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Self::Labels { labels, .. } => labels.len(),
            Self::Values(m) => m.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A fully materialized dataset split.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHandle {
    pub inputs: Matrix,
    pub targets: Targets,
    pub split: SplitTag,
    pub provenance: String,
}

impl DatasetHandle {
    /// Builds a handle, checking that inputs and targets agree on the
    /// sample count and that labels fit their class count.
    pub fn new(
        inputs: Matrix,
        targets: Targets,
        split: SplitTag,
        provenance: String,
    ) -> Result<Self> {
        if inputs.rows() != targets.len() {
            return Err(Error::InvalidArgument {
                what: "dataset",
                detail: format!(
                    "{} input rows vs {} targets",
                    inputs.rows(),
                    targets.len()
                ),
            });
        }
        if let Targets::Labels { labels, classes } = &targets {
            if let Some(&bad) = labels.iter().find(|&&l| l >= *classes) {
                return Err(Error::InvalidArgument {
                    what: "dataset",
                    detail: format!("label {bad} >= {classes} classes"),
                });
            }
        }
        Ok(Self {
            inputs,
            targets,
            split,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Same data under a different split tag.
    pub fn with_split(mut self, split: SplitTag) -> Self {
        self.split = split;
        self
    }

    /// Extracts the rows at `idx`, preserving order.
    pub fn gather(&self, idx: &[usize]) -> (Matrix, Targets) {
        let inputs = Matrix::from_fn(idx.len(), self.inputs.cols(), |r, c| {
            self.inputs.get(idx[r], c)
        });
        let targets = match &self.targets {
            Targets::Labels { labels, classes } => Targets::Labels {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                classes: *classes,
            },
            Targets::Values(m) => {
                Targets::Values(Matrix::from_fn(idx.len(), m.cols(), |r, c| m.get(idx[r], c)))
            }
        };
        (inputs, targets)
    }
}

/// Appends a constant-one column to the inputs.
///
/// Bias-free networks are positively homogeneous, so on a 1-D domain they
/// are linear on each half-line and cannot fit curved targets. Presenting
/// `[x, 1]` instead of `x` gives the first layer an offset column while the
/// network itself remains a pure weight-matrix chain.
pub fn lift_constant(data: &DatasetHandle) -> DatasetHandle {
    let inputs = Matrix::from_fn(data.inputs.rows(), data.inputs.cols() + 1, |r, c| {
        if c < data.inputs.cols() {
            data.inputs.get(r, c)
        } else {
            1.0
        }
    });
    DatasetHandle {
        inputs,
        targets: data.targets.clone(),
        split: data.split,
        provenance: format!("{}+lift", data.provenance),
    }
}

/// Splits off a seeded validation fraction: exactly `floor(frac * n)`
/// samples, disjoint from the returned training rows.
pub fn split_train_val(
    data: &DatasetHandle,
    frac: f64,
    seed: u64,
) -> Result<(DatasetHandle, DatasetHandle)> {
    if !(0.0..1.0).contains(&frac) {
        return Err(Error::InvalidArgument {
            what: "validation fraction",
            detail: format!("{frac} outside [0, 1)"),
        });
    }
    let n = data.len();
    let val_n = ((frac * n as f64) + 1e-9).floor() as usize;
    if val_n == 0 || val_n >= n {
        return Err(Error::InvalidArgument {
            what: "validation fraction",
            detail: format!("{frac} of {n} samples leaves an empty split"),
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let (val_idx, train_idx) = idx.split_at(val_n);
    let (vi, vt) = data.gather(val_idx);
    let (ti, tt) = data.gather(train_idx);
    let val = DatasetHandle::new(
        vi,
        vt,
        SplitTag::Val,
        format!("{}+val", data.provenance),
    )?;
    let train = DatasetHandle::new(
        ti,
        tt,
        SplitTag::Train,
        format!("{}+train", data.provenance),
    )?;
    Ok((train, val))
}

/// One sinusoidal component of a generated regression target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    /// Cycles over the domain.
    pub frequency: usize,
    pub amplitude: f64,
    pub phase: f64,
}

/// Seeded multi-frequency 1-D regression generator.
///
/// Inputs are uniform on the domain; targets are a sum of sinusoids in the
/// normalized coordinate `x_hat = (x - lo) / (hi - lo)` plus optional
/// Gaussian noise. The noiseless target spectrum on a sampling grid is
/// available in closed form.
#[derive(Debug, Clone, PartialEq)]
pub struct MultifreqSpec {
    pub bands: Vec<Band>,
    pub n_samples: usize,
    pub noise_sd: f64,
    pub seed: u64,
    pub domain: (f64, f64),
}

impl MultifreqSpec {
    pub fn validate(&self) -> Result<()> {
        if self.bands.is_empty() {
            return Err(Error::InvalidArgument {
                what: "bands",
                detail: String::from("empty"),
            });
        }
        for (i, b) in self.bands.iter().enumerate() {
            if self.bands[..i].iter().any(|o| o.frequency == b.frequency) {
                return Err(Error::DuplicateBand(b.frequency));
            }
        }
        if self.n_samples < 16 {
            return Err(Error::InvalidArgument {
                what: "n_samples",
                detail: format!("{} < 16", self.n_samples),
            });
        }
        if !(self.domain.0 < self.domain.1) {
            return Err(Error::InvalidArgument {
                what: "domain",
                detail: format!("[{}, {})", self.domain.0, self.domain.1),
            });
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::InvalidArgument {
                what: "noise_sd",
                detail: format!("{}", self.noise_sd),
            });
        }
        Ok(())
    }

    /// Noiseless target value at `x`.
    pub fn target_value(&self, x: f64) -> f64 {
        let (lo, hi) = self.domain;
        let x_hat = (x - lo) / (hi - lo);
        self.bands
            .iter()
            .map(|b| b.amplitude * (2.0 * core::f64::consts::PI * b.frequency as f64 * x_hat + b.phase).sin())
            .sum()
    }

    /// Exact one-sided spectrum of the noiseless target sampled on `grid`.
    ///
    /// Each band must satisfy `1 <= k < n/2` so its bin is alias-free.
    pub fn analytic_spectrum(&self, grid: &Grid1D) -> Result<Spectrum> {
        let n = grid.len();
        let mut bins = alloc::vec![(0.0, 0.0); n / 2 + 1];
        for b in &self.bands {
            if b.frequency == 0 || b.frequency >= n / 2 {
                return Err(Error::BandOutOfRange {
                    band: b.frequency,
                    max: n / 2 - 1,
                });
            }
            // a*sin(2*pi*k*j/n + phi) lands in bin k as (a/2)(sin phi - i cos phi).
            bins[b.frequency].0 += 0.5 * b.amplitude * b.phase.sin();
            bins[b.frequency].1 -= 0.5 * b.amplitude * b.phase.cos();
        }
        Spectrum::from_bins(n, bins)
    }
}

/// Draws the dataset described by `spec`.
///
/// Same spec (including seed) always produces identical bytes.
pub fn gen_multifreq(spec: &MultifreqSpec) -> Result<DatasetHandle> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (lo, hi) = spec.domain;
    let xs: Vec<f64> = (0..spec.n_samples)
        .map(|_| rng.random_range(lo..hi))
        .collect();
    let mut ys: Vec<f64> = xs.iter().map(|&x| spec.target_value(x)).collect();
    if spec.noise_sd > 0.0 {
        let noise = Normal::new(0.0, spec.noise_sd).expect("validated sd");
        for y in &mut ys {
            *y += noise.sample(&mut rng);
        }
    }
    DatasetHandle::new(
        Matrix::from_vec(spec.n_samples, 1, xs)?,
        Targets::Values(Matrix::from_vec(spec.n_samples, 1, ys)?),
        SplitTag::Train,
        format!("multifreq(seed={})", spec.seed),
    )
}
