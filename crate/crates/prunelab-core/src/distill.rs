//! Knowledge-distillation retraining of a pruned student.
//!
//! The student trains against a blend of the teacher's softened output
//! distribution and the hard labels:
//!
//! ```text
//! loss = alpha * T^2 * KL(softmax(teacher/T) || softmax(student/T))
//!      + (1 - alpha) * cross_entropy(labels, student)
//! ```
//!
//! The teacher is a frozen constant: no gradient reaches it, and the
//! training loop checks its weights are byte-identical before and after.
//! In regression mode the distillation term is the mean squared error
//! against the teacher's outputs, blended the same way.

use alloc::format;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;

use crate::dataset::{DatasetHandle, Targets};
use crate::error::{Error, Result};
use crate::network::{Evaluation, Network, OptimizerState};
use crate::tape::{soften_rows, NodeId, Tape};
use crate::tensor::Matrix;

/// Distillation hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistillConfig {
    /// Softening temperature; must be positive.
    pub temperature: f64,
    /// Weight on the distillation term, in `[0, 1]`. Zero reduces the loss
    /// to plain cross-entropy bitwise.
    pub alpha: f64,
    /// Student training epochs.
    pub epochs: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            temperature: 4.0,
            alpha: 0.9,
            epochs: 40,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidArgument {
                what: "temperature",
                detail: format!("{}", self.temperature),
            });
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument {
                what: "alpha",
                detail: format!("{} outside [0, 1]", self.alpha),
            });
        }
        if self.epochs == 0 {
            return Err(Error::InvalidArgument {
                what: "epochs",
                detail: "must be positive".to_string(),
            });
        }
        Ok(())
    }
}

/// Records the classification distillation loss on the tape and returns the
/// scalar node. The teacher logits are treated as constants.
pub fn kd_loss(
    tape: &mut Tape,
    student_logits: NodeId,
    teacher_logits: &Matrix,
    labels: &[usize],
    cfg: &DistillConfig,
) -> Result<NodeId> {
    cfg.validate()?;
    let teacher_soft = soften_rows(teacher_logits, cfg.temperature);
    let kl = tape.softened_kl(student_logits, teacher_soft, cfg.temperature)?;
    let ce = tape.softmax_cross_entropy(student_logits, labels)?;
    let kl_term = tape.scale(kl, cfg.alpha * cfg.temperature * cfg.temperature)?;
    let ce_term = tape.scale(ce, 1.0 - cfg.alpha)?;
    tape.add(kl_term, ce_term)
}

/// Regression variant: the distillation term is the MSE against the
/// teacher's outputs, blended with the MSE against the true targets.
pub fn kd_loss_regression(
    tape: &mut Tape,
    student_out: NodeId,
    teacher_out: &Matrix,
    targets: &Matrix,
    cfg: &DistillConfig,
) -> Result<NodeId> {
    cfg.validate()?;
    let to_teacher = tape.mean_squared_error(student_out, teacher_out.clone())?;
    let to_targets = tape.mean_squared_error(student_out, targets.clone())?;
    let kd_term = tape.scale(to_teacher, cfg.alpha)?;
    let hard_term = tape.scale(to_targets, 1.0 - cfg.alpha)?;
    tape.add(kd_term, hard_term)
}

/// Trains the (typically masked) student against the frozen teacher for
/// `cfg.epochs` epochs, returning per-epoch train metrics.
///
/// Both loss terms see the same minibatches from one seeded shuffle per
/// epoch; with `alpha = 0` the run is bitwise identical to plain training
/// with the same stream.
pub fn distill_train(
    student: &mut Network,
    teacher: &Network,
    data: &DatasetHandle,
    cfg: &DistillConfig,
    opt: &mut OptimizerState,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Evaluation>> {
    cfg.validate()?;
    if teacher.spec().input_dim != student.spec().input_dim
        || teacher.output_dim() != student.output_dim()
    {
        return Err(Error::ShapeMismatch {
            op: "distill_train",
            lhs: (student.spec().input_dim, student.output_dim()),
            rhs: (teacher.spec().input_dim, teacher.output_dim()),
        });
    }
    let teacher_checksum = teacher.weight_checksum();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let epoch_metrics =
            student.training_pass(data, opt, batch_size, rng, |tape, logits, inputs, targets| {
                let teacher_logits = teacher.forward(inputs)?;
                match targets {
                    Targets::Labels { labels, .. } => {
                        kd_loss(tape, logits, &teacher_logits, labels, cfg)
                    }
                    Targets::Values(t) => {
                        kd_loss_regression(tape, logits, &teacher_logits, t, cfg)
                    }
                }
            })?;
        metrics.push(epoch_metrics);
    }
    if teacher.weight_checksum() != teacher_checksum {
        return Err(Error::InvalidArgument {
            what: "teacher",
            detail: "teacher weights changed during distillation".to_string(),
        });
    }
    Ok(metrics)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Matrix;

    #[test]
    fn regression_blend_matches_hand_computation() {
        // One sample, one output: student 2.0, teacher 1.0, target 0.0.
        // loss = a*(2-1)^2 + (1-a)*(2-0)^2 = 0.3 + 0.7*4 = 3.1 at a = 0.3.
        let cfg = DistillConfig {
            temperature: 1.0,
            alpha: 0.3,
            epochs: 1,
        };
        let mut tape = Tape::new();
        let s = tape.input(Matrix::from_vec(1, 1, alloc::vec![2.0]).unwrap());
        let teacher = Matrix::from_vec(1, 1, alloc::vec![1.0]).unwrap();
        let target = Matrix::from_vec(1, 1, alloc::vec![0.0]).unwrap();
        let loss = kd_loss_regression(&mut tape, s, &teacher, &target, &cfg).unwrap();
        assert!((tape.value(loss).get(0, 0) - 3.1).abs() < 1e-12);
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        let bad_temp = DistillConfig { temperature: 0.0, alpha: 0.5, epochs: 1 };
        assert!(bad_temp.validate().is_err());
        let bad_alpha = DistillConfig { temperature: 1.0, alpha: 1.5, epochs: 1 };
        assert!(bad_alpha.validate().is_err());
        let bad_epochs = DistillConfig { temperature: 1.0, alpha: 0.5, epochs: 0 };
        assert!(bad_epochs.validate().is_err());
    }
}
