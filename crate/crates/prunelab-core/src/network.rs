//! Bias-free multilayer ReLU networks and their training loop.
//!
//! A network with layer widths `d_1..d_L` over input width `d_0` stores one
//! `d_k x d_{k-1}` weight matrix per layer and applies ReLU after every
//! layer except the last. Biases are omitted throughout, which keeps the
//! network positively homogeneous and the weight-chain flow indicator a
//! pure matrix product.
//!
//! Training is SGD with momentum, an optional per-epoch learning-rate
//! schedule, and gradient masking: when a mask set is attached, gradients,
//! velocities, and weights at masked-off coordinates are forced to exactly
//! zero at every step.

use alloc::format;
use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{DatasetHandle, Targets};
use crate::error::{Error, Result};
use crate::pruning::MaskSet;
use crate::tape::{NodeId, Tape};
use crate::tensor::Matrix;

/// Weight initialization schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// Gaussian with variance `2 / fan_in`.
    HeNormal,
    /// Uniform on `[-sqrt(6 / fan_in), sqrt(6 / fan_in))`.
    UniformScaled,
}

/// Architecture plus the seed and scheme that determine the initial weights.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    /// Widths `d_1..d_L`; the last entry is the output width.
    pub layer_widths: Vec<usize>,
    pub seed: u64,
    pub init: InitScheme,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::InvalidArgument {
                what: "network spec",
                detail: "input_dim must be positive".to_string(),
            });
        }
        if self.layer_widths.is_empty() {
            return Err(Error::InvalidArgument {
                what: "network spec",
                detail: "at least one layer required".to_string(),
            });
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::InvalidArgument {
                what: "network spec",
                detail: "layer widths must be positive".to_string(),
            });
        }
        Ok(())
    }

    /// Number of layers `L`.
    pub fn depth(&self) -> usize {
        self.layer_widths.len()
    }

    /// Shape of the k-th (0-based) weight matrix: `d_{k+1} x d_k`.
    pub fn layer_shape(&self, k: usize) -> (usize, usize) {
        let fan_in = if k == 0 {
            self.input_dim
        } else {
            self.layer_widths[k - 1]
        };
        (self.layer_widths[k], fan_in)
    }

    /// Total number of weights. This is the `d` used by sparsity and
    /// pruning-ratio accounting.
    pub fn weight_count(&self) -> usize {
        (0..self.depth())
            .map(|k| {
                let (r, c) = self.layer_shape(k);
                r * c
            })
            .sum()
    }

    /// Total number of units over layers `1..=L` (the input layer is not
    /// counted). This is the `d` under the square root of the max-norm
    /// bound.
    pub fn unit_count(&self) -> usize {
        self.layer_widths.iter().sum()
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().expect("validated spec")
    }
}

/// Training and evaluation summary for one pass over a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    /// Fraction of argmax-correct predictions; `None` for regression.
    pub accuracy: Option<f64>,
}

/// Loss head used by training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    CrossEntropy,
    Mse,
}

/// A ReLU network with optional weight masks and an initial-weight snapshot
/// for lottery-ticket rewinding.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    weights: Vec<Matrix>,
    masks: Option<MaskSet>,
    initial: Option<Vec<Matrix>>,
    epoch: usize,
}

impl Network {
    /// Draws a fresh network from the spec's seed. A copy of the initial
    /// weights is kept for later rewinding.
    pub fn init(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut weights = Vec::with_capacity(spec.depth());
        for k in 0..spec.depth() {
            let (rows, cols) = spec.layer_shape(k);
            let fan_in = cols as f64;
            let data: Vec<f64> = match spec.init {
                InitScheme::HeNormal => {
                    let dist = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("valid sd");
                    (0..rows * cols).map(|_| dist.sample(&mut rng)).collect()
                }
                InitScheme::UniformScaled => {
                    let bound = (6.0 / fan_in).sqrt();
                    (0..rows * cols)
                        .map(|_| rng.random_range(-bound..bound))
                        .collect()
                }
            };
            weights.push(Matrix::from_vec(rows, cols, data)?);
        }
        let initial = Some(weights.clone());
        Ok(Self {
            spec,
            weights,
            masks: None,
            initial,
            epoch: 0,
        })
    }

    /// Reassembles a network from checkpointed parts, revalidating every
    /// shape and the masked-zero invariant.
    pub fn from_parts(
        spec: NetworkSpec,
        weights: Vec<Matrix>,
        masks: Option<MaskSet>,
        initial: Option<Vec<Matrix>>,
        epoch: usize,
    ) -> Result<Self> {
        spec.validate()?;
        let check_stack = |stack: &[Matrix], what: &'static str| -> Result<()> {
            if stack.len() != spec.depth() {
                return Err(Error::InvalidArgument {
                    what,
                    detail: format!("{} matrices for depth {}", stack.len(), spec.depth()),
                });
            }
            for (k, w) in stack.iter().enumerate() {
                if w.shape() != spec.layer_shape(k) {
                    return Err(Error::InvalidArgument {
                        what,
                        detail: format!(
                            "layer {k} has shape {:?}, spec wants {:?}",
                            w.shape(),
                            spec.layer_shape(k)
                        ),
                    });
                }
            }
            Ok(())
        };
        check_stack(&weights, "weights")?;
        if let Some(init) = &initial {
            check_stack(init, "initial weights")?;
        }
        if let Some(m) = &masks {
            m.check_shapes(&spec)?;
            for (k, w) in weights.iter().enumerate() {
                for r in 0..w.rows() {
                    for c in 0..w.cols() {
                        if !m.get(k, r, c) && w.get(r, c) != 0.0 {
                            return Err(Error::InvalidArgument {
                                what: "weights",
                                detail: format!("masked-off weight ({k},{r},{c}) is nonzero"),
                            });
                        }
                    }
                }
            }
        }
        Ok(Self {
            spec,
            weights,
            masks,
            initial,
            epoch,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn masks(&self) -> Option<&MaskSet> {
        self.masks.as_ref()
    }

    pub fn initial_weights(&self) -> Option<&[Matrix]> {
        self.initial.as_deref()
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    pub(crate) fn set_weights(&mut self, weights: Vec<Matrix>) {
        debug_assert_eq!(weights.len(), self.weights.len());
        self.weights = weights;
    }

    pub(crate) fn set_masks(&mut self, masks: Option<MaskSet>) {
        self.masks = masks;
    }

    pub(crate) fn set_epoch(&mut self, epoch: usize) {
        self.epoch = epoch;
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    /// FNV-1a over the little-endian weight bytes, layer-major. Bitwise
    /// weight equality implies equal checksums.
    pub fn weight_checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for w in &self.weights {
            for x in w.data() {
                for b in x.to_le_bytes() {
                    h ^= u64::from(b);
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }

    /// Forward pass on a `samples x d_0` batch; returns `samples x d_L`
    /// outputs. ReLU after every layer except the last.
    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        if batch.cols() != self.spec.input_dim {
            return Err(Error::ShapeMismatch {
                op: "forward",
                lhs: batch.shape(),
                rhs: (batch.rows(), self.spec.input_dim),
            });
        }
        let mut h = batch.matmul(&self.weights[0].transpose())?;
        for w in &self.weights[1..] {
            h = h.relu().matmul(&w.transpose())?;
        }
        Ok(h)
    }

    /// Records the forward pass on a tape; returns the logits node and one
    /// parameter node per layer.
    pub fn forward_on_tape(&self, tape: &mut Tape, batch: NodeId) -> Result<(NodeId, Vec<NodeId>)> {
        if tape.value(batch).cols() != self.spec.input_dim {
            return Err(Error::ShapeMismatch {
                op: "forward_on_tape",
                lhs: tape.value(batch).shape(),
                rhs: (tape.value(batch).rows(), self.spec.input_dim),
            });
        }
        let mut params = Vec::with_capacity(self.weights.len());
        let mut h = batch;
        let last = self.weights.len() - 1;
        for (k, w) in self.weights.iter().enumerate() {
            let wn = tape.param(w.clone());
            params.push(wn);
            let wt = tape.transpose(wn);
            h = tape.matmul(h, wt)?;
            if k != last {
                h = tape.relu(h);
            }
        }
        Ok((h, params))
    }

    /// One full pass over the (seeded) shuffled dataset.
    ///
    /// After every optimizer step, masked positions of the weights and
    /// velocities are exactly zero. The epoch counter increments on
    /// success. Fails with the step index if the loss goes non-finite.
    pub fn train_epoch(
        &mut self,
        data: &DatasetHandle,
        opt: &mut OptimizerState,
        loss: LossKind,
        batch_size: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Evaluation> {
        self.training_pass(data, opt, batch_size, rng, |tape, logits, _inputs, targets| {
            build_supervised_loss(tape, logits, targets, loss)
        })
    }

    /// Shared minibatch loop: shuffle, forward, a caller-built loss head,
    /// backward, masked SGD update. Used by both plain training and
    /// distillation so the two consume randomness identically.
    pub(crate) fn training_pass<F>(
        &mut self,
        data: &DatasetHandle,
        opt: &mut OptimizerState,
        batch_size: usize,
        rng: &mut ChaCha8Rng,
        mut build_loss: F,
    ) -> Result<Evaluation>
    where
        F: FnMut(&mut Tape, NodeId, &Matrix, &Targets) -> Result<NodeId>,
    {
        if batch_size == 0 {
            return Err(Error::InvalidArgument {
                what: "batch_size",
                detail: "must be positive".to_string(),
            });
        }
        if data.input_dim() != self.spec.input_dim {
            return Err(Error::ShapeMismatch {
                op: "train_epoch",
                lhs: (data.len(), data.input_dim()),
                rhs: (data.len(), self.spec.input_dim),
            });
        }
        opt.check_against(self)?;
        let lr = opt.effective_lr(self.epoch);
        let n = data.len();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let classify = matches!(data.targets, Targets::Labels { .. });
        for (step, chunk) in idx.chunks(batch_size).enumerate() {
            let (inputs, targets) = data.gather(chunk);
            let mut tape = Tape::new();
            let x = tape.input(inputs.clone());
            // Numeric blowups anywhere in the step are divergence, reported
            // with the step index; shape errors pass through unchanged.
            let as_divergence = |e: Error| match e {
                Error::NonFinite { .. } => Error::Diverged { step },
                other => other,
            };
            let (logits, params) = self
                .forward_on_tape(&mut tape, x)
                .map_err(as_divergence)?;
            let loss_node = build_loss(&mut tape, logits, &inputs, &targets).map_err(as_divergence)?;
            let loss_val = tape.value(loss_node).get(0, 0);
            if !loss_val.is_finite() {
                return Err(Error::Diverged { step });
            }
            loss_sum += loss_val * chunk.len() as f64;
            if let Targets::Labels { labels, .. } = &targets {
                correct += count_argmax_correct(tape.value(logits), labels);
            }
            let grads = tape.backward(loss_node).map_err(as_divergence)?;
            self.sgd_step(opt, lr, &params, &grads)?;
        }
        self.epoch += 1;
        Ok(Evaluation {
            loss: loss_sum / n as f64,
            accuracy: classify.then(|| correct as f64 / n as f64),
        })
    }

    fn sgd_step(
        &mut self,
        opt: &mut OptimizerState,
        lr: f64,
        params: &[NodeId],
        grads: &crate::tape::Gradients,
    ) -> Result<()> {
        for (k, &pid) in params.iter().enumerate() {
            let grad = grads.get(pid).expect("registered parameter");
            let w = &mut self.weights[k];
            let v = &mut opt.velocities[k];
            let masked = self.masks.as_ref();
            for i in 0..w.rows() * w.cols() {
                let (r, c) = (i / w.cols(), i % w.cols());
                let keep = masked.is_none_or(|m| m.get(k, r, c));
                if keep {
                    let g = grad.data()[i] + opt.weight_decay * w.data()[i];
                    let vel = opt.momentum * v.data()[i] + g;
                    v.data_mut()[i] = vel;
                    w.data_mut()[i] -= lr * vel;
                } else {
                    v.data_mut()[i] = 0.0;
                    w.data_mut()[i] = 0.0;
                }
            }
        }
        Ok(())
    }

    /// Loss and accuracy over a dataset without mutating anything.
    pub fn evaluate(&self, data: &DatasetHandle, loss: LossKind) -> Result<Evaluation> {
        if data.input_dim() != self.spec.input_dim {
            return Err(Error::ShapeMismatch {
                op: "evaluate",
                lhs: (data.len(), data.input_dim()),
                rhs: (data.len(), self.spec.input_dim),
            });
        }
        let n = data.len();
        let chunk_size = 1024usize;
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let idx: Vec<usize> = (0..n).collect();
        for chunk in idx.chunks(chunk_size) {
            let (inputs, targets) = data.gather(chunk);
            let out = self.forward(&inputs)?;
            match (&targets, loss) {
                (Targets::Labels { labels, .. }, LossKind::CrossEntropy) => {
                    loss_sum += cross_entropy_total(&out, labels)?;
                    correct += count_argmax_correct(&out, labels);
                }
                (Targets::Values(t), LossKind::Mse) => {
                    let per_entry: f64 = out
                        .data()
                        .iter()
                        .zip(t.data())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    loss_sum += per_entry / out.cols() as f64;
                }
                _ => {
                    return Err(Error::InvalidArgument {
                        what: "loss",
                        detail: "loss kind does not match target kind".to_string(),
                    })
                }
            }
        }
        let classify = matches!(data.targets, Targets::Labels { .. });
        Ok(Evaluation {
            loss: loss_sum / n as f64,
            accuracy: classify.then(|| correct as f64 / n as f64),
        })
    }
}

/// Builds the plain supervised loss head on the tape.
pub(crate) fn build_supervised_loss(
    tape: &mut Tape,
    logits: NodeId,
    targets: &Targets,
    loss: LossKind,
) -> Result<NodeId> {
    match (targets, loss) {
        (Targets::Labels { labels, .. }, LossKind::CrossEntropy) => {
            tape.softmax_cross_entropy(logits, labels)
        }
        (Targets::Values(t), LossKind::Mse) => tape.mean_squared_error(logits, t.clone()),
        _ => Err(Error::InvalidArgument {
            what: "loss",
            detail: "loss kind does not match target kind".to_string(),
        }),
    }
}

fn count_argmax_correct(logits: &Matrix, labels: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|&(r, &label)| {
            let row = logits.row(r);
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best == label
        })
        .count()
}

fn cross_entropy_total(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != logits.rows() {
        return Err(Error::InvalidArgument {
            what: "labels",
            detail: format!("{} labels for {} rows", labels.len(), logits.rows()),
        });
    }
    let mut total = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
        total += lse - row[label];
    }
    Ok(total)
}

/// SGD-with-momentum state: hyperparameters, a per-layer velocity buffer,
/// and a multiplicative learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// `(epoch, multiplier)` pairs; the effective rate at epoch `e` is the
    /// base rate times every multiplier whose epoch is `<= e`.
    pub schedule: Vec<(usize, f64)>,
    velocities: Vec<Matrix>,
}

impl OptimizerState {
    pub fn new(net: &Network, learning_rate: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::InvalidArgument {
                what: "learning_rate",
                detail: format!("{learning_rate}"),
            });
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidArgument {
                what: "momentum",
                detail: format!("{momentum} outside [0, 1)"),
            });
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::InvalidArgument {
                what: "weight_decay",
                detail: format!("{weight_decay}"),
            });
        }
        Ok(Self {
            learning_rate,
            momentum,
            weight_decay,
            schedule: Vec::new(),
            velocities: net
                .weights()
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
        })
    }

    pub fn with_schedule(mut self, schedule: Vec<(usize, f64)>) -> Self {
        self.schedule = schedule;
        self
    }

    /// Base rate times the product of multipliers triggered at or before
    /// `epoch`.
    pub fn effective_lr(&self, epoch: usize) -> f64 {
        let mult: f64 = self
            .schedule
            .iter()
            .filter(|(e, _)| *e <= epoch)
            .map(|(_, m)| m)
            .product();
        self.learning_rate * mult
    }

    pub fn velocities(&self) -> &[Matrix] {
        &self.velocities
    }

    /// Restores optimizer state from checkpointed velocity buffers.
    pub fn from_parts(
        net: &Network,
        learning_rate: f64,
        momentum: f64,
        weight_decay: f64,
        schedule: Vec<(usize, f64)>,
        velocities: Vec<Matrix>,
    ) -> Result<Self> {
        let mut opt = Self::new(net, learning_rate, momentum, weight_decay)?.with_schedule(schedule);
        if velocities.len() != opt.velocities.len()
            || velocities
                .iter()
                .zip(&opt.velocities)
                .any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::InvalidArgument {
                what: "velocities",
                detail: "buffer shapes do not mirror the weight shapes".to_string(),
            });
        }
        opt.velocities = velocities;
        Ok(opt)
    }

    fn check_against(&self, net: &Network) -> Result<()> {
        if self.velocities.len() != net.weights().len()
            || self
                .velocities
                .iter()
                .zip(net.weights())
                .any(|(v, w)| v.shape() != w.shape())
        {
            return Err(Error::InvalidArgument {
                what: "optimizer",
                detail: "velocity shapes do not mirror this network".to_string(),
            });
        }
        Ok(())
    }
}
