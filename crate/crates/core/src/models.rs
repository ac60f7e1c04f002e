//! Victim models: a spectral HGNN and a mean-aggregation transfer model,
//! plus the full-batch training loop and classification metrics.
//!
//! Both models are two linear layers with a ReLU in between, wrapped around a
//! fixed structural aggregation operator: the symmetric normalized operator
//! for the spectral model, and a node-edge-node mean operator for the
//! transfer model. No dropout, no biases; determinism is part of the
//! contract.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypergraph::{Hypergraph, HypergraphError, Incidence};
use crate::numeric::{DenseMatrix, Graph, NumericError, OptimizerState};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
    #[error("mask selects no nodes")]
    EmptyMask,
    #[error("node {node} is masked but unlabeled")]
    MissingLabels { node: usize },
    #[error("invalid training config: {reason}")]
    InvalidConfig { reason: String },
    #[error("parameters are for a {actual:?} model, expected {expected:?}")]
    KindMismatch { expected: ModelKind, actual: ModelKind },
    #[error("graph has no labeled classes")]
    NoClasses,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Spectral,
    MeanAggregation,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Spectral => "spectral",
            ModelKind::MeanAggregation => "mean_aggregation",
        }
    }
}

/// Two-layer weights: input layer `F x hidden`, output layer `hidden x C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HgnnParams {
    pub kind: ModelKind,
    pub theta0: DenseMatrix,
    pub theta1: DenseMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            epochs: 200,
            learning_rate: 0.01,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.epochs < 1 {
            return Err(ModelError::InvalidConfig {
                reason: "epochs must be >= 1".into(),
            });
        }
        if !(self.learning_rate > 0.0) {
            return Err(ModelError::InvalidConfig {
                reason: "learning rate must be > 0".into(),
            });
        }
        if self.hidden < 1 {
            return Err(ModelError::InvalidConfig {
                reason: "hidden dimension must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Per-class precision/recall/F1 with support counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: HgnnParams,
    pub trace: Vec<EpochStats>,
}

/// Symmetric normalized aggregation operator
/// `D_V^{-1/2} H W D_E^{-1} H^T D_V^{-1/2}` as a dense N x N matrix.
///
/// Isolated nodes (zero weighted degree) get all-zero rows and columns: the
/// inverse square root is defined as 0 there.
pub fn normalized_operator(
    incidence: &Incidence,
    weights: &[f64],
) -> Result<DenseMatrix, HypergraphError> {
    let profile = incidence.degree_profile(weights)?;
    let n = incidence.num_nodes();
    let inv_sqrt: Vec<f64> = profile
        .node_degrees
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut op = DenseMatrix::zeros(n, n);
    for (j, members) in incidence.edges().iter().enumerate() {
        let scale = weights[j] / profile.hyperedge_degrees[j];
        for &u in members {
            for &v in members {
                let add = scale * inv_sqrt[u] * inv_sqrt[v];
                op.set(u, v, op.get(u, v) + add);
            }
        }
    }
    Ok(op)
}

/// Node-edge-node mean aggregation operator: row i averages, over the
/// hyperedges containing node i, the mean feature of each hyperedge's
/// members. Isolated nodes get identity rows so their features pass through
/// unaggregated.
pub fn mean_operator(incidence: &Incidence) -> DenseMatrix {
    let n = incidence.num_nodes();
    let mut op = DenseMatrix::zeros(n, n);
    let mut degree = vec![0usize; n];
    for members in incidence.edges() {
        for &v in members {
            degree[v] += 1;
        }
    }
    for members in incidence.edges() {
        let edge_mean = 1.0 / members.len() as f64;
        for &u in members {
            let row_scale = edge_mean / degree[u] as f64;
            for &v in members {
                op.set(u, v, op.get(u, v) + row_scale);
            }
        }
    }
    for (v, &d) in degree.iter().enumerate() {
        if d == 0 {
            op.set(v, v, 1.0);
        }
    }
    op
}

/// Per-hyperedge feature sums `Z = H^T X` (no normalization, no parameters).
pub fn hyperedge_feature_sums(graph: &Hypergraph) -> DenseMatrix {
    let f = graph.feature_dim();
    let mut z = DenseMatrix::zeros(graph.num_hyperedges(), f);
    for (j, members) in graph.incidence.edges().iter().enumerate() {
        for &v in members {
            for (zj, xv) in z.row_mut(j).iter_mut().zip(graph.features.row(v)) {
                *zj += xv;
            }
        }
    }
    z
}

fn aggregation_operator(graph: &Hypergraph, kind: ModelKind) -> Result<DenseMatrix, ModelError> {
    Ok(match kind {
        ModelKind::Spectral => {
            normalized_operator(&graph.incidence, &graph.incidence.unit_weights())?
        }
        ModelKind::MeanAggregation => mean_operator(&graph.incidence),
    })
}

/// Logits for all nodes: `Op . relu(Op . X . theta0) . theta1`.
pub fn forward(graph: &Hypergraph, params: &HgnnParams) -> Result<DenseMatrix, ModelError> {
    let op = aggregation_operator(graph, params.kind)?;
    let h = op.matmul(&graph.features)?.matmul(&params.theta0)?;
    let h = h.map(|v| v.max(0.0));
    Ok(op.matmul(&h)?.matmul(&params.theta1)?)
}

/// Spectral-model forward; rejects parameters tagged for the other model.
pub fn hgnn_forward(graph: &Hypergraph, params: &HgnnParams) -> Result<DenseMatrix, ModelError> {
    if params.kind != ModelKind::Spectral {
        return Err(ModelError::KindMismatch {
            expected: ModelKind::Spectral,
            actual: params.kind,
        });
    }
    forward(graph, params)
}

/// Mean-aggregation forward; rejects parameters tagged for the other model.
pub fn mean_aggregation_forward(
    graph: &Hypergraph,
    params: &HgnnParams,
) -> Result<DenseMatrix, ModelError> {
    if params.kind != ModelKind::MeanAggregation {
        return Err(ModelError::KindMismatch {
            expected: ModelKind::MeanAggregation,
            actual: params.kind,
        });
    }
    forward(graph, params)
}

fn uniform_init(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> DenseMatrix {
    let bound = (1.0 / fan_in as f64).sqrt();
    DenseMatrix::new(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.gen_range(-bound..bound))
            .collect(),
    )
    .expect("finite init")
}

fn masked_accuracy(
    logits: &DenseMatrix,
    labels: &[Option<usize>],
    mask: &[bool],
) -> Result<f64, ModelError> {
    let mut total = 0usize;
    let mut correct = 0usize;
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        let label = labels[i].ok_or(ModelError::MissingLabels { node: i })?;
        total += 1;
        if argmax(logits.row(i)) == label {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(ModelError::EmptyMask);
    }
    Ok(correct as f64 / total as f64)
}

/// Argmax with ties broken toward the lowest class index.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Full-batch training on masked cross-entropy plus L2 weight decay.
///
/// Returns the parameters at the epoch with the best validation accuracy
/// (final epoch if the validation mask is empty) and a per-epoch trace.
pub fn train(
    graph: &Hypergraph,
    kind: ModelKind,
    config: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    config.validate()?;
    if graph.num_classes == 0 {
        return Err(ModelError::NoClasses);
    }
    if !graph.masks.train.iter().any(|&b| b) {
        return Err(ModelError::EmptyMask);
    }
    let classes = graph.num_classes;
    let f = graph.feature_dim();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let theta0 = uniform_init(&mut rng, f, config.hidden, f);
    let theta1 = uniform_init(&mut rng, config.hidden, classes, config.hidden);

    let op = aggregation_operator(graph, kind)?;
    let op_x = op.matmul(&graph.features)?;

    let mut tape = Graph::new();
    let op_node = tape.constant(op);
    let op_x_node = tape.constant(op_x);
    let t0 = tape.parameter(theta0);
    let t1 = tape.parameter(theta1);
    let h = tape.matmul(op_x_node, t0)?;
    let h = tape.relu(h)?;
    let ah = tape.matmul(op_node, h)?;
    let logits = tape.matmul(ah, t1)?;
    let ce = tape.masked_cross_entropy(logits, &graph.labels, &graph.masks.train)?;
    let ss0 = tape.sum_squares(t0)?;
    let ss1 = tape.sum_squares(t1)?;
    let reg = tape.add(ss0, ss1)?;
    let reg = tape.scale(reg, config.weight_decay)?;
    let loss = tape.add(ce, reg)?;

    let has_val = graph.masks.val.iter().any(|&b| b);
    let mut optimizer = OptimizerState::new(config.learning_rate, &[
        tape.value(t0).clone(),
        tape.value(t1).clone(),
    ]);

    let mut trace = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, HgnnParams)> = None;
    for epoch in 1..=config.epochs {
        let grads = tape.backward(loss)?;
        let mut params = vec![tape.value(t0).clone(), tape.value(t1).clone()];
        let gs = vec![
            grads.wrt(t0).expect("theta0 reachable").clone(),
            grads.wrt(t1).expect("theta1 reachable").clone(),
        ];
        optimizer.step(&mut params, &gs)?;
        let theta1_new = params.pop().expect("theta1");
        let theta0_new = params.pop().expect("theta0");
        tape.set_leaf(t0, theta0_new)?;
        tape.set_leaf(t1, theta1_new)?;
        tape.recompute()?;

        let train_accuracy =
            masked_accuracy(tape.value(logits), &graph.labels, &graph.masks.train)?;
        let val_accuracy = if has_val {
            Some(masked_accuracy(
                tape.value(logits),
                &graph.labels,
                &graph.masks.val,
            )?)
        } else {
            None
        };
        trace.push(EpochStats {
            epoch,
            loss: tape.value(loss).scalar(),
            train_accuracy,
            val_accuracy,
        });

        if let Some(acc) = val_accuracy {
            let better = best.as_ref().map_or(true, |(b, _)| acc > *b);
            if better {
                best = Some((
                    acc,
                    HgnnParams {
                        kind,
                        theta0: tape.value(t0).clone(),
                        theta1: tape.value(t1).clone(),
                    },
                ));
            }
        }
    }

    let params = match best {
        Some((_, p)) => p,
        None => HgnnParams {
            kind,
            theta0: tape.value(t0).clone(),
            theta1: tape.value(t1).clone(),
        },
    };
    Ok(TrainOutcome { params, trace })
}

/// Accuracy and macro-F1 over the masked nodes.
///
/// Macro-F1 averages per-class F1 over all `num_classes` classes; classes
/// with zero support contribute 0.
pub fn evaluate(
    params: &HgnnParams,
    graph: &Hypergraph,
    mask: &[bool],
) -> Result<Metrics, ModelError> {
    if graph.num_classes == 0 {
        return Err(ModelError::NoClasses);
    }
    let logits = forward(graph, params)?;
    metrics_from_predictions(&logits, &graph.labels, mask, graph.num_classes)
}

fn metrics_from_predictions(
    logits: &DenseMatrix,
    labels: &[Option<usize>],
    mask: &[bool],
    classes: usize,
) -> Result<Metrics, ModelError> {
    let mut confusion = vec![vec![0usize; classes]; classes];
    let mut total = 0usize;
    let mut correct = 0usize;
    for (i, &m) in mask.iter().enumerate() {
        if !m {
            continue;
        }
        let label = labels[i].ok_or(ModelError::MissingLabels { node: i })?;
        let pred = argmax(logits.row(i));
        confusion[label][pred] += 1;
        total += 1;
        if pred == label {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(ModelError::EmptyMask);
    }

    let mut per_class = Vec::with_capacity(classes);
    let mut f1_sum = 0.0;
    for c in 0..classes {
        let tp = confusion[c][c];
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = (0..classes).map(|t| confusion[t][c]).sum();
        let precision = if predicted > 0 {
            tp as f64 / predicted as f64
        } else {
            0.0
        };
        let recall = if support > 0 {
            tp as f64 / support as f64
        } else {
            0.0
        };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        f1_sum += f1;
        per_class.push(ClassMetrics {
            class: c,
            precision,
            recall,
            f1,
            support,
        });
    }
    Ok(Metrics {
        accuracy: correct as f64 / total as f64,
        macro_f1: f1_sum / classes as f64,
        per_class,
    })
}
