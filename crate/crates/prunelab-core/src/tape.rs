//! Reverse-mode differentiation over matrix primitives.
//!
//! A [`Tape`] records every forward operation together with its result;
//! [`Tape::backward`] replays the record in exact reverse order,
//! accumulating adjoints, and returns one gradient per registered
//! parameter. Loss heads (softmax cross-entropy, temperature-softened KL,
//! mean squared error) are recorded as fused nodes with hand-derived
//! backward rules; the finite-difference suites cross-check them.

use alloc::vec::Vec;

#[cfg(not(feature = "std"))]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Handle to a value recorded on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    /// Constant leaf; no gradient flows into it.
    Input,
    /// Trainable leaf; `backward` reports its gradient.
    Param,
    Matmul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    /// Mean over rows of `logsumexp(z_i) - z_i[label_i]`.
    SoftmaxCrossEntropy { logits: NodeId, labels: Vec<usize> },
    /// Mean over rows of `KL(p_i || softmax(z_i / temp))` against constant
    /// row-stochastic `teacher` probabilities.
    SoftenedKl {
        logits: NodeId,
        teacher: Matrix,
        temp: f64,
    },
    /// Mean over all entries of `(pred - target)^2`.
    MeanSquaredError { pred: NodeId, target: Matrix },
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Gradients keyed by parameter node, in registration order.
pub struct Gradients {
    by_param: Vec<(NodeId, Matrix)>,
}

impl Gradients {
    /// Gradient of the loss with respect to the parameter node.
    pub fn get(&self, param: NodeId) -> Option<&Matrix> {
        self.by_param
            .iter()
            .find(|(id, _)| *id == param)
            .map(|(_, g)| g)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Matrix)> {
        self.by_param.iter().map(|(id, g)| (*id, g))
    }
}

/// Recorded forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<NodeId>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded operations.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a constant input.
    pub fn input(&mut self, value: Matrix) -> NodeId {
        self.push(value, Op::Input)
    }

    /// Records a trainable parameter.
    pub fn param(&mut self, value: Matrix) -> NodeId {
        let id = self.push(value, Op::Param);
        self.params.push(id);
        id
    }

    /// Forward value at a node.
    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::Matmul(a, b)))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Hadamard(a, b)))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        let value = self.value(a).scale(c)?;
        Ok(self.push(value, Op::Scale(a, c)))
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).relu();
        self.push(value, Op::Relu(a))
    }

    /// Sum of all entries, as a 1x1 node.
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let value = Matrix::scalar_unchecked(self.value(a).sum());
        self.push(value, Op::SumAll(a))
    }

    /// Mean of all entries, as a 1x1 node.
    pub fn mean_all(&mut self, a: NodeId) -> NodeId {
        let m = self.value(a);
        let count = (m.rows() * m.cols()) as f64;
        let value = Matrix::scalar_unchecked(m.sum() / count);
        self.push(value, Op::MeanAll(a))
    }

    /// Softmax cross-entropy against integer labels, mean over rows.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let z = self.value(logits);
        if labels.len() != z.rows() {
            return Err(Error::InvalidArgument {
                what: "labels",
                detail: alloc::format!("{} labels for {} rows", labels.len(), z.rows()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= z.cols()) {
            return Err(Error::InvalidArgument {
                what: "labels",
                detail: alloc::format!("label {bad} >= {} classes", z.cols()),
            });
        }
        let mut total = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = z.row(r);
            total += log_sum_exp(row) - row[label];
        }
        let value = Matrix::scalar_unchecked(total / labels.len() as f64);
        Ok(self.push(
            value,
            Op::SoftmaxCrossEntropy {
                logits,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Mean KL divergence `KL(teacher || softmax(logits / temp))` over rows.
    ///
    /// `teacher` rows must already be probability vectors; they are treated
    /// as constants, so no gradient flows toward the teacher.
    pub fn softened_kl(&mut self, logits: NodeId, teacher: Matrix, temp: f64) -> Result<NodeId> {
        if !(temp > 0.0) {
            return Err(Error::InvalidArgument {
                what: "temperature",
                detail: alloc::format!("{temp} <= 0"),
            });
        }
        let z = self.value(logits);
        if z.shape() != teacher.shape() {
            return Err(Error::ShapeMismatch {
                op: "softened_kl",
                lhs: z.shape(),
                rhs: teacher.shape(),
            });
        }
        let mut total = 0.0;
        for r in 0..z.rows() {
            let row = z.row(r);
            let scaled: Vec<f64> = row.iter().map(|x| x / temp).collect();
            let lse = log_sum_exp(&scaled);
            for (j, &p) in teacher.row(r).iter().enumerate() {
                if p > 0.0 {
                    let log_q = scaled[j] - lse;
                    total += p * (p.ln() - log_q);
                }
            }
        }
        let value = Matrix::scalar_unchecked(total / z.rows() as f64);
        Ok(self.push(value, Op::SoftenedKl { logits, teacher, temp }))
    }

    /// Mean squared error against a constant target, over all entries.
    pub fn mean_squared_error(&mut self, pred: NodeId, target: Matrix) -> Result<NodeId> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(Error::ShapeMismatch {
                op: "mean_squared_error",
                lhs: p.shape(),
                rhs: target.shape(),
            });
        }
        let count = (p.rows() * p.cols()) as f64;
        let total: f64 = p
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let value = Matrix::scalar_unchecked(total / count);
        Ok(self.push(value, Op::MeanSquaredError { pred, target }))
    }

    /// Gradients of a scalar loss node with respect to every parameter.
    ///
    /// Parameters that do not influence the loss get zero gradients of
    /// their own shape.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        let loss_val = self.value(loss);
        if loss_val.shape() != (1, 1) {
            return Err(Error::NotScalar {
                rows: loss_val.rows(),
                cols: loss_val.cols(),
            });
        }
        let mut adjoint: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adjoint[loss.0] = Some(Matrix::from_fn(1, 1, |_, _| 1.0));

        for id in (0..=loss.0).rev() {
            let Some(grad) = adjoint[id].take() else {
                continue;
            };
            match &self.nodes[id].op {
                Op::Input => {}
                Op::Param => {
                    // Re-stash: collected below in registration order.
                    adjoint[id] = Some(grad);
                }
                Op::Matmul(a, b) => {
                    let ga = grad.matmul(&self.value(*b).transpose())?;
                    let gb = self.value(*a).transpose().matmul(&grad)?;
                    accumulate(&mut adjoint, *a, ga)?;
                    accumulate(&mut adjoint, *b, gb)?;
                }
                Op::Transpose(a) => {
                    accumulate(&mut adjoint, *a, grad.transpose())?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut adjoint, *a, grad.clone())?;
                    accumulate(&mut adjoint, *b, grad)?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adjoint, *a, grad.clone())?;
                    accumulate(&mut adjoint, *b, grad.scale(-1.0)?)?;
                }
                Op::Hadamard(a, b) => {
                    let ga = grad.hadamard(self.value(*b))?;
                    let gb = grad.hadamard(self.value(*a))?;
                    accumulate(&mut adjoint, *a, ga)?;
                    accumulate(&mut adjoint, *b, gb)?;
                }
                Op::Scale(a, c) => {
                    accumulate(&mut adjoint, *a, grad.scale(*c)?)?;
                }
                Op::Relu(a) => {
                    // Subgradient 0 at exactly 0: strict comparison.
                    let input = self.value(*a);
                    let mut ga = grad.clone();
                    for (g, &x) in ga.data_mut().iter_mut().zip(input.data()) {
                        if x <= 0.0 {
                            *g = 0.0;
                        }
                    }
                    accumulate(&mut adjoint, *a, ga)?;
                }
                Op::SumAll(a) => {
                    let gs = grad.get(0, 0);
                    let src = self.value(*a);
                    accumulate(
                        &mut adjoint,
                        *a,
                        Matrix::from_fn(src.rows(), src.cols(), |_, _| gs),
                    )?;
                }
                Op::MeanAll(a) => {
                    let src = self.value(*a);
                    let gs = grad.get(0, 0) / (src.rows() * src.cols()) as f64;
                    accumulate(
                        &mut adjoint,
                        *a,
                        Matrix::from_fn(src.rows(), src.cols(), |_, _| gs),
                    )?;
                }
                Op::SoftmaxCrossEntropy { logits, labels } => {
                    let z = self.value(*logits);
                    let gs = grad.get(0, 0) / labels.len() as f64;
                    let mut ga = Matrix::zeros(z.rows(), z.cols());
                    for (r, &label) in labels.iter().enumerate() {
                        let probs = softmax_row(z.row(r), 1.0);
                        for (j, q) in probs.iter().enumerate() {
                            let indicator = if j == label { 1.0 } else { 0.0 };
                            ga.set(r, j, gs * (q - indicator));
                        }
                    }
                    accumulate(&mut adjoint, *logits, ga)?;
                }
                Op::SoftenedKl { logits, teacher, temp } => {
                    let z = self.value(*logits);
                    let gs = grad.get(0, 0) / (z.rows() as f64 * temp);
                    let mut ga = Matrix::zeros(z.rows(), z.cols());
                    for r in 0..z.rows() {
                        let probs = softmax_row(z.row(r), *temp);
                        for (j, q) in probs.iter().enumerate() {
                            ga.set(r, j, gs * (q - teacher.get(r, j)));
                        }
                    }
                    accumulate(&mut adjoint, *logits, ga)?;
                }
                Op::MeanSquaredError { pred, target } => {
                    let p = self.value(*pred);
                    let gs = grad.get(0, 0) * 2.0 / (p.rows() * p.cols()) as f64;
                    let ga = p.sub(target)?.scale(gs)?;
                    accumulate(&mut adjoint, *pred, ga)?;
                }
            }
        }

        let by_param = self
            .params
            .iter()
            .map(|&id| {
                let shape = self.value(id).shape();
                let g = adjoint[id.0]
                    .take()
                    .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1));
                (id, g)
            })
            .collect();
        Ok(Gradients { by_param })
    }

    fn push(&mut self, value: Matrix, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }
}

fn accumulate(adjoint: &mut [Option<Matrix>], id: NodeId, grad: Matrix) -> Result<()> {
    adjoint[id.0] = Some(match adjoint[id.0].take() {
        Some(existing) => existing.add(&grad)?,
        None => grad,
    });
    Ok(())
}

/// `log(sum(exp(x)))` with max-shift stabilization.
fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let s: f64 = row.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Softmax of `row / temp`.
fn softmax_row(row: &[f64], temp: f64) -> Vec<f64> {
    let scaled: Vec<f64> = row.iter().map(|x| x / temp).collect();
    let lse = log_sum_exp(&scaled);
    scaled.iter().map(|x| (x - lse).exp()).collect()
}

/// Row-stochastic softened distribution `softmax(m / temp)` per row.
pub fn soften_rows(m: &Matrix, temp: f64) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), m.cols());
    for r in 0..m.rows() {
        let probs = softmax_row(m.row(r), temp);
        for (c, p) in probs.into_iter().enumerate() {
            out.set(r, c, p);
        }
    }
    out
}
