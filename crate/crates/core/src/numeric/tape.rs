//! Tape-based reverse-mode differentiation over [`DenseMatrix`] values.
//!
//! A [`Graph`] is an append-only list of primitive nodes; construction order
//! is the topological order. Leaves are either trainable parameters or
//! constants. After updating leaf values with [`Graph::set_leaf`] the whole
//! tape can be re-evaluated in place with [`Graph::recompute`], which is what
//! both the training loops and the finite-difference checker rely on.

use super::matrix::{leaky_relu, row_softmax, DenseMatrix};
use super::NumericError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Broadcast add of a 1 x cols row vector to every row.
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId, f64),
    Relu(NodeId),
    LeakyRelu(NodeId, f64),
    RowSoftmax(NodeId),
    /// Per-row cosine similarity between two matrices of equal shape;
    /// output is a rows x 1 column.
    CosineRows(NodeId, NodeId),
    SumAll(NodeId),
    MeanAll(NodeId),
    SumSquares(NodeId),
    MaskedCrossEntropy {
        logits: NodeId,
        rows: Vec<usize>,
        labels: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: DenseMatrix,
    requires_grad: bool,
}

/// Gradients per node, produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    /// Gradient of the loss with respect to the given node, if it was reached.
    pub fn wrt(&self, id: NodeId) -> Option<&DenseMatrix> {
        self.grads[id.0].as_ref()
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn value(&self, id: NodeId) -> &DenseMatrix {
        &self.nodes[id.0].value
    }

    pub fn parameter(&mut self, value: DenseMatrix) -> NodeId {
        self.push(Op::Leaf, value, true)
    }

    pub fn constant(&mut self, value: DenseMatrix) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    /// Replace a leaf's value. Downstream nodes are stale until
    /// [`Graph::recompute`] runs.
    pub fn set_leaf(&mut self, id: NodeId, value: DenseMatrix) -> Result<(), NumericError> {
        let node = &mut self.nodes[id.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(NumericError::NotALeaf(id.0));
        }
        if node.value.shape() != value.shape() {
            return Err(NumericError::ShapeMismatch {
                context: "set_leaf",
                lhs: node.value.shape(),
                rhs: value.shape(),
            });
        }
        node.value = value;
        Ok(())
    }

    /// Adjust one coordinate of a leaf in place (finite differences).
    pub fn nudge_leaf(&mut self, id: NodeId, index: usize, delta: f64) -> Result<(), NumericError> {
        let node = &mut self.nodes[id.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(NumericError::NotALeaf(id.0));
        }
        node.value.data_mut()[index] += delta;
        Ok(())
    }

    /// Re-evaluate every non-leaf node in construction (= topological) order.
    pub fn recompute(&mut self) -> Result<(), NumericError> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            self.nodes[i].value = self.eval(&op)?;
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericError> {
        self.push_op(Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericError> {
        self.push_op(Op::Add(a, b))
    }

    /// `x + b` where `b` is a 1 x cols row vector added to every row of `x`.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId, NumericError> {
        self.push_op(Op::AddRow(x, bias))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId, NumericError> {
        self.push_op(Op::Scale(x, factor))
    }

    pub fn add_scalar(&mut self, x: NodeId, c: f64) -> Result<NodeId, NumericError> {
        self.push_op(Op::AddScalar(x, c))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId, NumericError> {
        self.push_op(Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> Result<NodeId, NumericError> {
        debug_assert!(slope > 0.0 && slope < 1.0, "slope must be in (0,1)");
        self.push_op(Op::LeakyRelu(x, slope))
    }

    pub fn row_softmax(&mut self, x: NodeId) -> Result<NodeId, NumericError> {
        self.push_op(Op::RowSoftmax(x))
    }

    pub fn cosine_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, NumericError> {
        self.push_op(Op::CosineRows(a, b))
    }

    pub fn sum_all(&mut self, x: NodeId) -> Result<NodeId, NumericError> {
        self.push_op(Op::SumAll(x))
    }

    pub fn mean_all(&mut self, x: NodeId) -> Result<NodeId, NumericError> {
        self.push_op(Op::MeanAll(x))
    }

    pub fn sum_squares(&mut self, x: NodeId) -> Result<NodeId, NumericError> {
        self.push_op(Op::SumSquares(x))
    }

    /// Mean over masked rows of `-log softmax(logits)[label]`.
    pub fn masked_cross_entropy(
        &mut self,
        logits: NodeId,
        labels: &[Option<usize>],
        mask: &[bool],
    ) -> Result<NodeId, NumericError> {
        let shape = self.value(logits).shape();
        if labels.len() != shape.0 || mask.len() != shape.0 {
            return Err(NumericError::ShapeMismatch {
                context: "masked_cross_entropy",
                lhs: shape,
                rhs: (labels.len(), mask.len()),
            });
        }
        let mut rows = Vec::new();
        let mut row_labels = Vec::new();
        for (i, &m) in mask.iter().enumerate() {
            if !m {
                continue;
            }
            let label = labels[i].ok_or(NumericError::MissingLabel { row: i })?;
            if label >= shape.1 {
                return Err(NumericError::LabelOutOfRange {
                    row: i,
                    label,
                    classes: shape.1,
                });
            }
            rows.push(i);
            row_labels.push(label);
        }
        if rows.is_empty() {
            return Err(NumericError::EmptyMask);
        }
        self.push_op(Op::MaskedCrossEntropy {
            logits,
            rows,
            labels: row_labels,
        })
    }

    /// Reverse sweep. The loss node must be scalar (1 x 1).
    pub fn backward(&self, loss: NodeId) -> Result<Gradients, NumericError> {
        let shape = self.value(loss).shape();
        if shape != (1, 1) {
            return Err(NumericError::NonScalarLoss {
                rows: shape.0,
                cols: shape.1,
            });
        }
        let mut grads: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(DenseMatrix::new(1, 1, vec![1.0]).expect("unit seed"));

        for i in (0..=loss.0).rev() {
            let Some(grad) = grads[i].take() else {
                continue;
            };
            self.accumulate_inputs(i, &grad, &mut grads)?;
            grads[i] = Some(grad);
        }
        Ok(Gradients { grads })
    }

    fn push(&mut self, op: Op, value: DenseMatrix, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push_op(&mut self, op: Op) -> Result<NodeId, NumericError> {
        let value = self.eval(&op)?;
        let requires_grad = op_inputs(&op)
            .iter()
            .any(|id| self.nodes[id.0].requires_grad);
        Ok(self.push(op, value, requires_grad))
    }

    fn eval(&self, op: &Op) -> Result<DenseMatrix, NumericError> {
        match op {
            Op::Leaf => unreachable!("leaves are never re-evaluated"),
            Op::MatMul(a, b) => self.value(*a).matmul(self.value(*b)),
            Op::Add(a, b) => self.value(*a).add(self.value(*b)),
            Op::AddRow(x, bias) => {
                let (x, bias) = (self.value(*x), self.value(*bias));
                if bias.rows() != 1 || bias.cols() != x.cols() {
                    return Err(NumericError::ShapeMismatch {
                        context: "add_row",
                        lhs: x.shape(),
                        rhs: bias.shape(),
                    });
                }
                let mut out = x.clone();
                for i in 0..out.rows() {
                    for (o, b) in out.row_mut(i).iter_mut().zip(bias.row(0)) {
                        *o += b;
                    }
                }
                Ok(out)
            }
            Op::Scale(x, f) => Ok(self.value(*x).scale(*f)),
            Op::AddScalar(x, c) => Ok(self.value(*x).map(|v| v + c)),
            Op::Relu(x) => Ok(self.value(*x).map(|v| v.max(0.0))),
            Op::LeakyRelu(x, slope) => Ok(leaky_relu(self.value(*x), *slope)),
            Op::RowSoftmax(x) => Ok(row_softmax(self.value(*x))),
            Op::CosineRows(a, b) => {
                let (a, b) = (self.value(*a), self.value(*b));
                if a.shape() != b.shape() {
                    return Err(NumericError::ShapeMismatch {
                        context: "cosine_rows",
                        lhs: a.shape(),
                        rhs: b.shape(),
                    });
                }
                let mut out = DenseMatrix::zeros(a.rows(), 1);
                for i in 0..a.rows() {
                    out.set(i, 0, super::matrix::cosine_similarity(a.row(i), b.row(i))?);
                }
                Ok(out)
            }
            Op::SumAll(x) => {
                DenseMatrix::new(1, 1, vec![self.value(*x).data().iter().sum()])
            }
            Op::MeanAll(x) => {
                let v = self.value(*x);
                let n = v.data().len() as f64;
                DenseMatrix::new(1, 1, vec![v.data().iter().sum::<f64>() / n])
            }
            Op::SumSquares(x) => DenseMatrix::new(1, 1, vec![self.value(*x).frobenius_sq()]),
            Op::MaskedCrossEntropy {
                logits,
                rows,
                labels,
            } => {
                let logits = self.value(*logits);
                let mut total = 0.0;
                for (&row, &label) in rows.iter().zip(labels) {
                    total += neg_log_softmax(logits.row(row), label);
                }
                DenseMatrix::new(1, 1, vec![total / rows.len() as f64])
            }
        }
    }

    fn accumulate_inputs(
        &self,
        index: usize,
        grad: &DenseMatrix,
        grads: &mut [Option<DenseMatrix>],
    ) -> Result<(), NumericError> {
        let node = &self.nodes[index];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    let d = grad.matmul(&self.value(*b).transpose())?;
                    add_into(grads, *a, d)?;
                }
                if self.wants(*b) {
                    let d = self.value(*a).transpose().matmul(grad)?;
                    add_into(grads, *b, d)?;
                }
            }
            Op::Add(a, b) => {
                if self.wants(*a) {
                    add_into(grads, *a, grad.clone())?;
                }
                if self.wants(*b) {
                    add_into(grads, *b, grad.clone())?;
                }
            }
            Op::AddRow(x, bias) => {
                if self.wants(*x) {
                    add_into(grads, *x, grad.clone())?;
                }
                if self.wants(*bias) {
                    let mut d = DenseMatrix::zeros(1, grad.cols());
                    for i in 0..grad.rows() {
                        for (o, g) in d.row_mut(0).iter_mut().zip(grad.row(i)) {
                            *o += g;
                        }
                    }
                    add_into(grads, *bias, d)?;
                }
            }
            Op::Scale(x, f) => {
                if self.wants(*x) {
                    add_into(grads, *x, grad.scale(*f))?;
                }
            }
            Op::AddScalar(x, _) => {
                if self.wants(*x) {
                    add_into(grads, *x, grad.clone())?;
                }
            }
            Op::Relu(x) | Op::LeakyRelu(x, _) => {
                if self.wants(*x) {
                    let slope = match node.op {
                        Op::LeakyRelu(_, s) => s,
                        _ => 0.0,
                    };
                    let input = self.value(*x);
                    let mut d = grad.clone();
                    for (dv, &iv) in d.data_mut().iter_mut().zip(input.data()) {
                        if iv <= 0.0 {
                            *dv *= slope;
                        }
                    }
                    add_into(grads, *x, d)?;
                }
            }
            Op::RowSoftmax(x) => {
                if self.wants(*x) {
                    let y = &node.value;
                    let mut d = DenseMatrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let dot: f64 = grad.row(i).iter().zip(y.row(i)).map(|(g, v)| g * v).sum();
                        for ((o, &g), &v) in
                            d.row_mut(i).iter_mut().zip(grad.row(i)).zip(y.row(i))
                        {
                            *o = v * (g - dot);
                        }
                    }
                    add_into(grads, *x, d)?;
                }
            }
            Op::CosineRows(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let mut da = DenseMatrix::zeros(av.rows(), av.cols());
                let mut db = DenseMatrix::zeros(bv.rows(), bv.cols());
                for i in 0..av.rows() {
                    let g = grad.get(i, 0);
                    let (u, v) = (av.row(i), bv.row(i));
                    let nu = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let nv = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    let c = node.value.get(i, 0);
                    for j in 0..u.len() {
                        da.set(i, j, g * (v[j] / (nu * nv) - c * u[j] / (nu * nu)));
                        db.set(i, j, g * (u[j] / (nu * nv) - c * v[j] / (nv * nv)));
                    }
                }
                if self.wants(*a) {
                    add_into(grads, *a, da)?;
                }
                if self.wants(*b) {
                    add_into(grads, *b, db)?;
                }
            }
            Op::SumAll(x) => {
                if self.wants(*x) {
                    let g = grad.scalar();
                    let v = self.value(*x);
                    add_into(grads, *x, DenseMatrix::zeros(v.rows(), v.cols()).map(|_| g))?;
                }
            }
            Op::MeanAll(x) => {
                if self.wants(*x) {
                    let v = self.value(*x);
                    let g = grad.scalar() / v.data().len() as f64;
                    add_into(grads, *x, DenseMatrix::zeros(v.rows(), v.cols()).map(|_| g))?;
                }
            }
            Op::SumSquares(x) => {
                if self.wants(*x) {
                    let g = grad.scalar();
                    add_into(grads, *x, self.value(*x).scale(2.0 * g))?;
                }
            }
            Op::MaskedCrossEntropy {
                logits,
                rows,
                labels,
            } => {
                if self.wants(*logits) {
                    let lv = self.value(*logits);
                    let g = grad.scalar() / rows.len() as f64;
                    let mut d = DenseMatrix::zeros(lv.rows(), lv.cols());
                    for (&row, &label) in rows.iter().zip(labels) {
                        let probs = softmax_row(lv.row(row));
                        for (j, p) in probs.iter().enumerate() {
                            let delta = if j == label { 1.0 } else { 0.0 };
                            d.set(row, j, g * (p - delta));
                        }
                    }
                    add_into(grads, *logits, d)?;
                }
            }
        }
        Ok(())
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }
}

fn op_inputs(op: &Op) -> Vec<NodeId> {
    match op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::CosineRows(a, b) => {
            vec![*a, *b]
        }
        Op::Scale(x, _)
        | Op::AddScalar(x, _)
        | Op::Relu(x)
        | Op::LeakyRelu(x, _)
        | Op::RowSoftmax(x)
        | Op::SumAll(x)
        | Op::MeanAll(x)
        | Op::SumSquares(x)
        | Op::MaskedCrossEntropy { logits: x, .. } => vec![*x],
    }
}

fn add_into(
    grads: &mut [Option<DenseMatrix>],
    id: NodeId,
    delta: DenseMatrix,
) -> Result<(), NumericError> {
    grads[id.0] = Some(match grads[id.0].take() {
        Some(existing) => existing.add(&delta)?,
        None => delta,
    });
    Ok(())
}

fn softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn neg_log_softmax(row: &[f64], label: usize) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - row[label]
}

/// Central-difference gradient check for one parameter leaf.
///
/// Returns the maximum over coordinates of
/// `|fd - analytic| / max(1e-8, |fd| + |analytic|)`. Disagreements below the
/// roundoff resolution of central differences (eps / (2 step), scaled by the
/// loss magnitude) count as exact agreement: at step 1e-5 a quotient of an
/// O(1) loss carries ~1e-11 of float noise, which would otherwise dominate
/// the relative error wherever the true gradient is ~1e-8.
pub fn finite_difference_check(
    graph: &mut Graph,
    loss: NodeId,
    param: NodeId,
    step: f64,
) -> Result<f64, NumericError> {
    debug_assert!(step > 0.0);
    graph.recompute()?;
    let grads = graph.backward(loss)?;
    let analytic = grads
        .wrt(param)
        .cloned()
        .unwrap_or_else(|| DenseMatrix::zeros(graph.value(param).rows(), graph.value(param).cols()));

    let loss_scale = 1.0 + graph.value(loss).scalar().abs();
    let noise_floor = 8.0 * f64::EPSILON * loss_scale / (2.0 * step);
    let n = graph.value(param).data().len();
    let mut max_err: f64 = 0.0;
    for idx in 0..n {
        graph.nudge_leaf(param, idx, step)?;
        graph.recompute()?;
        let plus = graph.value(loss).scalar();
        graph.nudge_leaf(param, idx, -2.0 * step)?;
        graph.recompute()?;
        let minus = graph.value(loss).scalar();
        graph.nudge_leaf(param, idx, step)?;

        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic.data()[idx];
        let diff = (numeric - a).abs();
        if diff <= noise_floor {
            continue;
        }
        let err = diff / f64::max(1e-8, numeric.abs() + a.abs());
        max_err = max_err.max(err);
    }
    graph.recompute()?;
    Ok(max_err)
}
