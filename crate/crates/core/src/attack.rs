//! Node-injection attack pipeline: pivotality-based hyperedge recognition,
//! budgeted random selection, feature inversion through a shared MLP, and
//! plan assembly, plus a random-injection baseline and ablation switches.
//!
//! The whole pipeline is black-box by construction: its only inputs are the
//! hypergraph (structure and features) and the attack configuration. Victim
//! model parameters never enter.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypergraph::{
    inject_nodes, AttackedHypergraph, Hypergraph, HypergraphError, Incidence, InjectionPlan,
};
use crate::models::hyperedge_feature_sums;
use crate::numeric::{row_softmax, DenseMatrix, Graph, NumericError, OptimizerState};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// LeakyReLU slope used by the inverter MLP.
pub const LEAKY_SLOPE: f64 = 0.01;

// Sub-stream ids so each stage draws from an independent ChaCha stream of
// the same seed.
const STREAM_SELECT: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_MLP: u64 = 3;
const STREAM_BASELINE: u64 = 4;

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack config: {reason}")]
    InvalidConfig { reason: String },
    #[error(
        "candidate hyperedge set is empty{}; increase tau to admit more hyperedges",
        tau.map(|t| format!(" at pivotality level {t}")).unwrap_or_default()
    )]
    EmptyCandidateSet { tau: Option<usize> },
    #[error("every target hyperedge has a zero-norm feature sum; cosine loss undefined")]
    ZeroNormHyperedgeFeature,
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

/// All attack knobs, including the ablation switches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// Perturbation rate; the injection budget is `floor(eta * N)`.
    pub eta: f64,
    /// Pivotality level: hyperedges containing a node with hyperdegree
    /// <= tau are candidates.
    pub tau: usize,
    /// Weight of the hinge regularizer in the inversion loss.
    pub lambda: f64,
    /// Similarity threshold of the hinge term.
    pub similarity_threshold: f64,
    /// Gaussian noise scale for the feature initializer.
    pub noise_scale: f64,
    pub inverter_hidden: usize,
    pub inverter_depth: usize,
    pub inverter_epochs: usize,
    pub inverter_learning_rate: f64,
    pub seed: u64,
    /// Rescale generated features to the mean node-feature norm. Off by
    /// default: injected features stay raw softmax rows.
    pub scale_match: bool,
    /// Ablation: skip pivotality recognition, candidates = all hyperedges.
    pub disable_recognizer: bool,
    /// Ablation: skip the MLP, inject softmax of the initializer output.
    pub disable_inverter: bool,
    /// Ablation: keep the MLP but train zero epochs.
    pub disable_cosine_loss: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            eta: 0.05,
            tau: 2,
            lambda: 0.1,
            similarity_threshold: 0.9,
            noise_scale: 0.1,
            inverter_hidden: 128,
            inverter_depth: 2,
            inverter_epochs: 300,
            inverter_learning_rate: 0.01,
            seed: 0,
            scale_match: false,
            disable_recognizer: false,
            disable_inverter: false,
            disable_cosine_loss: false,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<(), AttackError> {
        let fail = |reason: &str| {
            Err(AttackError::InvalidConfig {
                reason: reason.to_string(),
            })
        };
        if !(self.eta > 0.0 && self.eta <= 0.05) {
            return fail("eta must be in (0, 0.05]");
        }
        if self.tau < 1 {
            return fail("tau must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return fail("similarity threshold must be in [0, 1]");
        }
        if self.lambda < 0.0 {
            return fail("lambda must be >= 0");
        }
        if self.noise_scale < 0.0 {
            return fail("noise scale must be >= 0");
        }
        if self.inverter_hidden < 1 || self.inverter_depth < 1 {
            return fail("inverter width and depth must be >= 1");
        }
        if !(self.inverter_learning_rate > 0.0) {
            return fail("inverter learning rate must be > 0");
        }
        Ok(())
    }
}

/// Weights and biases of the shared inverter MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InverterParams {
    pub weights: Vec<DenseMatrix>,
    /// One 1 x width row vector per layer.
    pub biases: Vec<DenseMatrix>,
}

/// Hyperedges whose aggregation paths make them pivotal: those containing at
/// least one node with hyperdegree <= tau. Sorted, deterministic.
pub fn pivotal_hyperedges(incidence: &Incidence, tau: usize) -> Vec<usize> {
    debug_assert!(tau >= 1);
    let degrees: Vec<usize> = (0..incidence.num_nodes())
        .map(|v| incidence.incident_edges(v).map_or(0, <[usize]>::len))
        .collect();
    incidence
        .edges()
        .iter()
        .enumerate()
        .filter(|(_, members)| members.iter().any(|&v| degrees[v] <= tau))
        .map(|(j, _)| j)
        .collect()
}

/// Outcome of budgeted selection.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetSelection {
    /// Chosen hyperedges in draw order, `min(floor(eta*N), |candidates|)` of
    /// them.
    pub hyperedges: Vec<usize>,
    /// Requested budget `floor(eta * N)` before clipping.
    pub budget: usize,
    /// True when the candidate set was smaller than the budget.
    pub clipped: bool,
}

/// Full Fisher-Yates shuffle of the candidate list under the selection
/// stream of `seed`.
fn shuffled_candidates(candidates: &[usize], seed: u64) -> Vec<usize> {
    let mut order = candidates.to_vec();
    order.sort_unstable();
    let mut rng = seeded(seed, STREAM_SELECT);
    for i in 0..order.len() {
        let j = rng.gen_range(i..order.len());
        order.swap(i, j);
    }
    order
}

/// Draw `min(floor(eta*N), |candidates|)` hyperedges uniformly without
/// replacement.
pub fn select_budget(
    candidates: &[usize],
    eta: f64,
    num_nodes: usize,
    seed: u64,
) -> Result<BudgetSelection, AttackError> {
    if !(eta > 0.0) {
        return Err(AttackError::InvalidConfig {
            reason: "eta must be > 0".into(),
        });
    }
    if candidates.is_empty() {
        return Err(AttackError::EmptyCandidateSet { tau: None });
    }
    let budget = (eta * num_nodes as f64).floor() as usize;
    let order = shuffled_candidates(candidates, seed);
    let take = budget.min(order.len());
    Ok(BudgetSelection {
        hyperedges: order[..take].to_vec(),
        budget,
        clipped: order.len() < budget,
    })
}

/// Elementwise product of the member features of one hyperedge, plus
/// Gaussian noise of scale `mu` drawn from `rng`.
fn initial_feature_with(
    graph: &Hypergraph,
    hyperedge: usize,
    mu: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, AttackError> {
    let members = graph.incidence.members(hyperedge)?;
    let f = graph.feature_dim();
    let mut product = vec![1.0; f];
    for &v in members {
        for (p, x) in product.iter_mut().zip(graph.features.row(v)) {
            *p *= x;
        }
    }
    for p in product.iter_mut() {
        let noise: f64 = rng.sample(StandardNormal);
        *p += mu * noise;
    }
    Ok(product)
}

/// Initializer for one hyperedge with an explicit seed.
pub fn initial_feature(
    graph: &Hypergraph,
    hyperedge: usize,
    mu: f64,
    seed: u64,
) -> Result<Vec<f64>, AttackError> {
    let mut rng = seeded(seed, STREAM_NOISE);
    initial_feature_with(graph, hyperedge, mu, &mut rng)
}

/// Initializer outputs for a batch of targets, one row each, drawn from the
/// shared noise stream in target order.
fn initial_feature_matrix(
    graph: &Hypergraph,
    targets: &[usize],
    mu: f64,
    seed: u64,
) -> Result<DenseMatrix, AttackError> {
    let mut rng = seeded(seed, STREAM_NOISE);
    let f = graph.feature_dim();
    let mut rows = Vec::with_capacity(targets.len() * f);
    for &j in targets {
        rows.extend(initial_feature_with(graph, j, mu, &mut rng)?);
    }
    Ok(DenseMatrix::new(targets.len(), f, rows)?)
}

fn uniform_layer(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let bound = (1.0 / rows as f64).sqrt();
    DenseMatrix::new(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.gen_range(-bound..bound))
            .collect(),
    )
    .expect("finite init")
}

/// Result of feature inversion over a target set.
#[derive(Debug, Clone)]
pub struct Inversion {
    /// Target hyperedge -> generated feature row (a softmax output).
    pub features: BTreeMap<usize, Vec<f64>>,
    /// Mean loss before training, then after each epoch.
    pub loss_trace: Vec<f64>,
    /// Mean cosine between generated features and their hyperedge feature
    /// sums at the final state.
    pub final_mean_cosine: f64,
    /// Targets discarded because their hyperedge feature sum was all zero.
    pub dropped_zero_norm: Vec<usize>,
    pub params: InverterParams,
}

/// The inversion objective for one target: `cos + lambda * max(cos - t, 0)`.
pub fn cosine_hinge(cos: f64, lambda: f64, t: f64) -> f64 {
    cos + lambda * (cos - t).max(0.0)
}

/// Train one shared MLP to generate, per target hyperedge, a feature row
/// minimizing cosine similarity to that hyperedge's feature sum.
///
/// Targets whose feature sum is identically zero are dropped (cosine is
/// undefined there) and reported in the outcome.
pub fn invert_features(
    graph: &Hypergraph,
    targets: &[usize],
    config: &AttackConfig,
) -> Result<Inversion, AttackError> {
    if targets.is_empty() {
        return Err(AttackError::InvalidConfig {
            reason: "target set must be non-empty".into(),
        });
    }
    let sums = hyperedge_feature_sums(graph);
    let mut valid = Vec::new();
    let mut dropped_zero_norm = Vec::new();
    for &j in targets {
        if j >= graph.num_hyperedges() {
            return Err(HypergraphError::HyperedgeIdOutOfRange {
                hyperedge: j,
                num_hyperedges: graph.num_hyperedges(),
            }
            .into());
        }
        if sums.row(j).iter().all(|&v| v == 0.0) {
            dropped_zero_norm.push(j);
        } else {
            valid.push(j);
        }
    }
    if valid.is_empty() {
        return Err(AttackError::ZeroNormHyperedgeFeature);
    }

    let f = graph.feature_dim();
    let x_ini = initial_feature_matrix(graph, &valid, config.noise_scale, config.seed)?;
    let z_rows: Vec<Vec<f64>> = valid.iter().map(|&j| sums.row(j).to_vec()).collect();
    let z = DenseMatrix::from_rows(&z_rows)?;

    // Layer stack: F -> hidden, (depth-1) x hidden -> hidden, hidden -> F.
    let mut rng = seeded(config.seed, STREAM_MLP);
    let mut widths = vec![f];
    widths.extend(std::iter::repeat_n(config.inverter_hidden, config.inverter_depth));
    widths.push(f);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for w in widths.windows(2) {
        weights.push(uniform_layer(&mut rng, w[0], w[1]));
        biases.push(DenseMatrix::zeros(1, w[1]));
    }

    let mut tape = Graph::new();
    let input = tape.constant(x_ini);
    let z_node = tape.constant(z);
    let mut param_nodes = Vec::new();
    let mut h = input;
    let layers = weights.len();
    for (i, (w, b)) in weights.iter().zip(&biases).enumerate() {
        let wn = tape.parameter(w.clone());
        let bn = tape.parameter(b.clone());
        h = tape.matmul(h, wn)?;
        h = tape.add_row(h, bn)?;
        if i + 1 < layers {
            h = tape.leaky_relu(h, LEAKY_SLOPE)?;
        }
        param_nodes.push(wn);
        param_nodes.push(bn);
    }
    let generated = tape.row_softmax(h)?;
    let cos = tape.cosine_rows(generated, z_node)?;
    let hinge_arg = tape.add_scalar(cos, -config.similarity_threshold)?;
    let hinge = tape.relu(hinge_arg)?;
    let penalty = tape.scale(hinge, config.lambda)?;
    let objective = tape.add(cos, penalty)?;
    let loss = tape.mean_all(objective)?;

    let initial_params: Vec<DenseMatrix> = param_nodes
        .iter()
        .map(|&p| tape.value(p).clone())
        .collect();
    let mut optimizer = OptimizerState::new(config.inverter_learning_rate, &initial_params);

    let mut loss_trace = vec![tape.value(loss).scalar()];
    for _ in 0..config.inverter_epochs {
        let grads = tape.backward(loss)?;
        let mut params: Vec<DenseMatrix> = param_nodes
            .iter()
            .map(|&p| tape.value(p).clone())
            .collect();
        let gs: Vec<DenseMatrix> = param_nodes
            .iter()
            .zip(&params)
            .map(|(&p, value)| {
                grads
                    .wrt(p)
                    .cloned()
                    .unwrap_or_else(|| DenseMatrix::zeros(value.rows(), value.cols()))
            })
            .collect();
        optimizer.step(&mut params, &gs)?;
        for (&node, value) in param_nodes.iter().zip(params) {
            tape.set_leaf(node, value)?;
        }
        tape.recompute()?;
        loss_trace.push(tape.value(loss).scalar());
    }

    let generated_value = tape.value(generated);
    let features: BTreeMap<usize, Vec<f64>> = valid
        .iter()
        .enumerate()
        .map(|(row, &j)| (j, generated_value.row(row).to_vec()))
        .collect();
    let cos_value = tape.value(cos);
    let final_mean_cosine =
        cos_value.data().iter().sum::<f64>() / cos_value.rows() as f64;
    let params = InverterParams {
        weights: param_nodes
            .iter()
            .step_by(2)
            .map(|&p| tape.value(p).clone())
            .collect(),
        biases: param_nodes
            .iter()
            .skip(1)
            .step_by(2)
            .map(|&p| tape.value(p).clone())
            .collect(),
    };
    Ok(Inversion {
        features,
        loss_trace,
        final_mean_cosine,
        dropped_zero_norm,
        params,
    })
}

/// What the attack did, for reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackReport {
    pub budget: usize,
    pub tau: usize,
    pub candidate_count: usize,
    /// Target hyperedges actually injected into, sorted.
    pub injected_hyperedges: Vec<usize>,
    pub dropped_zero_norm: Vec<usize>,
    pub clipped: bool,
    pub loss_trace: Vec<f64>,
    pub final_mean_cosine: f64,
    /// Measured duration; callers that need byte-reproducible files strip it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time_ms: Option<f64>,
}

/// The full injection pipeline: recognize pivotal hyperedges, select a
/// budget of them, generate one malicious node per target, inject.
pub fn pivotal_injection(
    graph: &Hypergraph,
    config: &AttackConfig,
) -> Result<(AttackedHypergraph, AttackReport), AttackError> {
    config.validate()?;
    let start = Instant::now();

    let candidates = if config.disable_recognizer {
        (0..graph.num_hyperedges()).collect()
    } else {
        pivotal_hyperedges(&graph.incidence, config.tau)
    };
    if candidates.is_empty() {
        return Err(AttackError::EmptyCandidateSet {
            tau: Some(config.tau),
        });
    }

    let budget = (config.eta * graph.num_nodes() as f64).floor() as usize;
    let order = shuffled_candidates(&candidates, config.seed);

    // Walk the shuffle, skipping zero-norm hyperedges so dropped targets are
    // replaced from the remaining candidates.
    let sums = hyperedge_feature_sums(graph);
    let mut selected = Vec::new();
    let mut dropped_zero_norm = Vec::new();
    for j in order {
        if selected.len() == budget {
            break;
        }
        if sums.row(j).iter().all(|&v| v == 0.0) {
            dropped_zero_norm.push(j);
            continue;
        }
        selected.push(j);
    }
    if selected.is_empty() {
        return Err(AttackError::ZeroNormHyperedgeFeature);
    }
    let clipped = selected.len() < budget;
    selected.sort_unstable();
    dropped_zero_norm.sort_unstable();

    let (features, loss_trace, final_mean_cosine) = if config.disable_inverter {
        let x_ini = initial_feature_matrix(graph, &selected, config.noise_scale, config.seed)?;
        let soft = row_softmax(&x_ini);
        let mut cos_sum = 0.0;
        for (row, &j) in selected.iter().enumerate() {
            cos_sum += crate::numeric::cosine_similarity(soft.row(row), sums.row(j))?;
        }
        let map: BTreeMap<usize, Vec<f64>> = selected
            .iter()
            .enumerate()
            .map(|(row, &j)| (j, soft.row(row).to_vec()))
            .collect();
        (map, Vec::new(), cos_sum / selected.len() as f64)
    } else {
        let mut inverter_config = config.clone();
        if config.disable_cosine_loss {
            inverter_config.inverter_epochs = 0;
        }
        let inversion = invert_features(graph, &selected, &inverter_config)?;
        (
            inversion.features,
            inversion.loss_trace,
            inversion.final_mean_cosine,
        )
    };

    let target_norm = if config.scale_match {
        Some(mean_feature_norm(&graph.features))
    } else {
        None
    };
    let entries: Vec<(usize, Vec<f64>)> = features
        .into_iter()
        .map(|(j, row)| {
            let scale = match target_norm {
                // Rescale each generated row to the mean node-feature norm.
                Some(target) => {
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > 0.0 {
                        target / norm
                    } else {
                        1.0
                    }
                }
                None => 1.0,
            };
            (j, row.into_iter().map(|v| v * scale).collect())
        })
        .collect();
    let plan = InjectionPlan {
        entries,
        budget,
        selection_seed: config.seed,
    };
    let attacked = inject_nodes(graph, &plan)?;
    let report = AttackReport {
        budget,
        tau: config.tau,
        candidate_count: candidates.len(),
        injected_hyperedges: selected,
        dropped_zero_norm,
        clipped,
        loss_trace,
        final_mean_cosine,
        wall_time_ms: Some(start.elapsed().as_secs_f64() * 1e3),
    };
    Ok((attacked, report))
}

fn mean_feature_norm(features: &DenseMatrix) -> f64 {
    let n = features.rows();
    if n == 0 {
        return 1.0;
    }
    let total: f64 = (0..n)
        .map(|i| features.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum();
    total / n as f64
}

/// Baseline: uniform hyperedges, injected features drawn per coordinate from
/// a Gaussian matched to the empirical feature mean/variance, clamped to the
/// observed feature range.
pub fn random_injection(
    graph: &Hypergraph,
    eta: f64,
    seed: u64,
) -> Result<AttackedHypergraph, AttackError> {
    if !(eta > 0.0) {
        return Err(AttackError::InvalidConfig {
            reason: "eta must be > 0".into(),
        });
    }
    let m = graph.num_hyperedges();
    let budget = ((eta * graph.num_nodes() as f64).floor() as usize).min(m);
    let all: Vec<usize> = (0..m).collect();
    let mut targets: Vec<usize> = shuffled_candidates(&all, seed)[..budget].to_vec();
    targets.sort_unstable();

    let f = graph.feature_dim();
    let n = graph.num_nodes();
    let mut mean = vec![0.0; f];
    let mut var = vec![0.0; f];
    for i in 0..n {
        for (c, &x) in graph.features.row(i).iter().enumerate() {
            mean[c] += x;
        }
    }
    for v in mean.iter_mut() {
        *v /= n as f64;
    }
    for i in 0..n {
        for (c, &x) in graph.features.row(i).iter().enumerate() {
            var[c] += (x - mean[c]) * (x - mean[c]);
        }
    }
    for v in var.iter_mut() {
        *v /= n as f64;
    }
    let lo = graph.features.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = graph
        .features
        .data()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);

    let mut rng = seeded(seed, STREAM_BASELINE);
    let entries: Vec<(usize, Vec<f64>)> = targets
        .iter()
        .map(|&j| {
            let row: Vec<f64> = (0..f)
                .map(|c| {
                    let noise: f64 = rng.sample(StandardNormal);
                    (mean[c] + var[c].sqrt() * noise).clamp(lo, hi)
                })
                .collect();
            (j, row)
        })
        .collect();
    let plan = InjectionPlan {
        entries,
        budget,
        selection_seed: seed,
    };
    Ok(inject_nodes(graph, &plan)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::Masks;
    use crate::synth::{generate, SyntheticSpec};
    use proptest::prelude::*;

    fn graph_from(
        hyperedges: &[Vec<usize>],
        num_nodes: usize,
        features: DenseMatrix,
    ) -> Hypergraph {
        Hypergraph {
            incidence: Incidence::build(hyperedges, num_nodes).unwrap(),
            features,
            labels: vec![None; num_nodes],
            num_classes: 0,
            masks: Masks::empty(num_nodes),
        }
    }

    #[test]
    fn recognizer_finds_single_path_hyperedge() {
        // Node 0 lies only in hyperedge 0; node 1 and 2 have degree 2.
        let g = graph_from(
            &[vec![0, 1], vec![1, 2], vec![2, 3], vec![3, 4]],
            5,
            DenseMatrix::zeros(5, 2),
        );
        let pivotal = pivotal_hyperedges(&g.incidence, 1);
        assert!(pivotal.contains(&0));
        assert!(!pivotal.contains(&1));
    }

    #[test]
    fn recognizer_includes_all_at_high_tau() {
        let g = graph_from(&[vec![0, 1], vec![1, 2]], 3, DenseMatrix::zeros(3, 1));
        assert_eq!(pivotal_hyperedges(&g.incidence, 10), vec![0, 1]);
    }

    #[test]
    fn recognizer_empty_when_all_degrees_exceed_tau() {
        // Every node has hyperdegree 2.
        let g = graph_from(
            &[vec![0, 1], vec![1, 0], vec![2, 3], vec![3, 2]],
            4,
            DenseMatrix::zeros(4, 1),
        );
        assert!(pivotal_hyperedges(&g.incidence, 1).is_empty());
    }

    #[test]
    fn budget_matches_citation_scale_example() {
        // At a 1% rate on a 2300-node hypergraph the budget is 23.
        let candidates: Vec<usize> = (0..500).collect();
        let sel = select_budget(&candidates, 0.01, 2300, 1).unwrap();
        assert_eq!(sel.budget, 23);
        assert_eq!(sel.hyperedges.len(), 23);
        assert!(!sel.clipped);
    }

    #[test]
    fn budget_clips_to_candidate_count() {
        let sel = select_budget(&[4, 9, 2], 0.05, 200, 1).unwrap();
        assert_eq!(sel.budget, 10);
        assert_eq!(sel.hyperedges.len(), 3);
        assert!(sel.clipped);
        let mut sorted = sel.hyperedges.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![2, 4, 9]);
    }

    #[test]
    fn budget_selection_is_deterministic() {
        let candidates: Vec<usize> = (0..40).collect();
        let a = select_budget(&candidates, 0.05, 100, 7).unwrap();
        let b = select_budget(&candidates, 0.05, 100, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn budget_rejects_empty_candidates() {
        assert!(matches!(
            select_budget(&[], 0.05, 100, 0),
            Err(AttackError::EmptyCandidateSet { .. })
        ));
    }

    #[test]
    fn initializer_multiplies_member_features() {
        let features =
            DenseMatrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0]]).unwrap();
        let g = graph_from(&[vec![0, 1]], 2, features);
        let x = initial_feature(&g, 0, 0.0, 1).unwrap();
        assert_eq!(x, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn initializer_singleton_returns_member_feature() {
        let features = DenseMatrix::from_rows(&[vec![0.25, 0.75]]).unwrap();
        let g = graph_from(&[vec![0]], 1, features);
        let x = initial_feature(&g, 0, 0.0, 1).unwrap();
        assert_eq!(x, vec![0.25, 0.75]);
    }

    #[test]
    fn initializer_noise_is_seeded() {
        let features = DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let g = graph_from(&[vec![0]], 1, features);
        let a = initial_feature(&g, 0, 0.5, 3).unwrap();
        let b = initial_feature(&g, 0, 0.5, 3).unwrap();
        let c = initial_feature(&g, 0, 0.5, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(matches!(
            initial_feature(&g, 9, 0.1, 0),
            Err(AttackError::Hypergraph(
                HypergraphError::HyperedgeIdOutOfRange { .. }
            ))
        ));
    }

    #[test]
    fn hinge_loss_values_match_hand_substitution() {
        // cos = 1 with lambda 0.1, t 0.9 -> 1 + 0.1 * 0.1 = 1.01.
        assert!((cosine_hinge(1.0, 0.1, 0.9) - 1.01).abs() < 1e-12);
        // Orthogonal generated feature: hinge inactive below the threshold.
        assert_eq!(cosine_hinge(0.0, 0.1, 0.9), 0.0);
    }

    fn inverter_fixture() -> Hypergraph {
        // Six nodes over six feature coordinates; every hyperedge's feature
        // sum leaves several coordinates at zero so a near-orthogonal simplex
        // point exists.
        let features = DenseMatrix::from_rows(&[
            vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0],
            vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0],
        ])
        .unwrap();
        graph_from(&[vec![0, 1], vec![2, 3], vec![4, 5]], 6, features)
    }

    #[test]
    fn simplex_infimum_against_partial_support_is_near_zero() {
        // Brute-force oracle on the F=3 probability simplex: against a
        // nonnegative target with a zero coordinate, the minimum cosine over
        // softmax-reachable points approaches 0 (all mass on the zero
        // coordinate).
        let z = [2.0, 1.0, 0.0];
        let mut best = f64::INFINITY;
        let steps = 60;
        for a in 0..=steps {
            for b in 0..=(steps - a) {
                let c = steps - a - b;
                let p = [
                    a as f64 / steps as f64,
                    b as f64 / steps as f64,
                    c as f64 / steps as f64,
                ];
                if p.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let cos = crate::numeric::cosine_similarity(&p, &z).unwrap();
                best = best.min(cos);
            }
        }
        assert!(best.abs() < 1e-9, "grid minimum {best}");
    }

    #[test]
    fn inversion_drives_cosine_low_and_loss_down() {
        let g = inverter_fixture();
        let config = AttackConfig {
            inverter_hidden: 16,
            inverter_epochs: 300,
            noise_scale: 0.1,
            seed: 1,
            ..AttackConfig::default()
        };
        let inv = invert_features(&g, &[0, 1, 2], &config).unwrap();
        assert!(
            inv.final_mean_cosine <= 0.1,
            "mean cosine {}",
            inv.final_mean_cosine
        );
        assert!(inv.loss_trace.last().unwrap() <= &inv.loss_trace[0]);
        assert_eq!(inv.loss_trace.len(), 301);
        // Every generated row is a softmax output.
        for row in inv.features.values() {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn inversion_initial_loss_matches_hinge_oracle() {
        // Epoch-0 loss must equal the mean of cosine_hinge over the initial
        // generated rows, computed independently here.
        let g = inverter_fixture();
        let config = AttackConfig {
            inverter_hidden: 16,
            inverter_epochs: 0,
            seed: 5,
            ..AttackConfig::default()
        };
        let inv = invert_features(&g, &[0, 1, 2], &config).unwrap();
        let sums = hyperedge_feature_sums(&g);
        let mut expected = 0.0;
        for (&j, row) in &inv.features {
            let cos = crate::numeric::cosine_similarity(row, sums.row(j)).unwrap();
            expected += cosine_hinge(cos, config.lambda, config.similarity_threshold);
        }
        expected /= inv.features.len() as f64;
        assert!((inv.loss_trace[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn inversion_drops_zero_norm_targets() {
        let features = DenseMatrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 0.0],
            vec![0.0, 0.0],
        ])
        .unwrap();
        let g = graph_from(&[vec![0], vec![1, 2]], 3, features);
        let config = AttackConfig {
            inverter_hidden: 4,
            inverter_epochs: 5,
            seed: 0,
            ..AttackConfig::default()
        };
        let inv = invert_features(&g, &[0, 1], &config).unwrap();
        assert_eq!(inv.dropped_zero_norm, vec![1]);
        assert!(inv.features.contains_key(&0));

        assert!(matches!(
            invert_features(&g, &[1], &config),
            Err(AttackError::ZeroNormHyperedgeFeature)
        ));
    }

    #[test]
    fn pipeline_injects_exact_budget_into_distinct_pivotal_edges() {
        let g = generate(&SyntheticSpec::default()).unwrap();
        let config = AttackConfig {
            inverter_epochs: 30,
            seed: 3,
            ..AttackConfig::default()
        };
        let (attacked, report) = pivotal_injection(&g, &config).unwrap();
        assert_eq!(report.budget, 20); // floor(0.05 * 400)
        assert_eq!(attacked.injected_count, 20);
        assert_eq!(attacked.graph.num_nodes(), 420);
        assert_eq!(attacked.graph.num_hyperedges(), 200);
        let mut targets: Vec<usize> = attacked.origin_map.values().copied().collect();
        targets.sort_unstable();
        targets.dedup();
        assert_eq!(targets.len(), 20, "one node per distinct hyperedge");
        let pivotal = pivotal_hyperedges(&g.incidence, config.tau);
        assert!(targets.iter().all(|j| pivotal.contains(j)));
    }

    #[test]
    fn pipeline_is_deterministic() {
        let g = generate(&SyntheticSpec {
            num_nodes: 80,
            num_hyperedges: 40,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let config = AttackConfig {
            inverter_epochs: 20,
            seed: 9,
            ..AttackConfig::default()
        };
        let (a, ra) = pivotal_injection(&g, &config).unwrap();
        let (b, rb) = pivotal_injection(&g, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra.injected_hyperedges, rb.injected_hyperedges);
        assert_eq!(ra.loss_trace, rb.loss_trace);
    }

    #[test]
    fn full_ablation_matches_uniform_selection() {
        // Recognizer and inverter disabled: same hyperedges as a uniform
        // draw over all edges, features untrained softmax rows.
        let g = generate(&SyntheticSpec {
            num_nodes: 100,
            num_hyperedges: 50,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let config = AttackConfig {
            disable_recognizer: true,
            disable_inverter: true,
            seed: 21,
            ..AttackConfig::default()
        };
        let (attacked, report) = pivotal_injection(&g, &config).unwrap();
        let all: Vec<usize> = (0..50).collect();
        let uniform = select_budget(&all, config.eta, 100, config.seed).unwrap();
        let mut expected = uniform.hyperedges.clone();
        expected.sort_unstable();
        assert_eq!(report.injected_hyperedges, expected);
        assert!(report.loss_trace.is_empty());
        for v in attacked.injected_node_ids() {
            let row = attacked.graph.features.row(v);
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pipeline_rejects_eta_out_of_range() {
        let g = generate(&SyntheticSpec {
            num_nodes: 40,
            num_hyperedges: 20,
            ..SyntheticSpec::default()
        })
        .unwrap();
        for eta in [0.0, -0.1, 0.2] {
            let config = AttackConfig {
                eta,
                ..AttackConfig::default()
            };
            assert!(matches!(
                pivotal_injection(&g, &config),
                Err(AttackError::InvalidConfig { .. })
            ));
        }
    }

    #[test]
    fn random_baseline_exhausts_all_edges() {
        let features = DenseMatrix::from_rows(&[
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![0.5, 0.5],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let g = graph_from(&[vec![0, 1], vec![2, 3]], 4, features);
        // eta * N = 4 > M = 2: every hyperedge receives one node.
        let attacked = random_injection(&g, 0.05 * 20.0, 0).unwrap();
        assert_eq!(attacked.injected_count, 2);
        let targets: Vec<usize> = attacked.origin_map.values().copied().collect();
        assert_eq!(targets, vec![0, 1]);
    }

    #[test]
    fn random_baseline_empty_budget_is_identity() {
        let g = graph_from(
            &[vec![0, 1]],
            2,
            DenseMatrix::from_rows(&[vec![1.0], vec![0.0]]).unwrap(),
        );
        let attacked = random_injection(&g, 0.05, 1).unwrap();
        assert_eq!(attacked.injected_count, 0);
        assert_eq!(attacked.graph, g);
    }

    #[test]
    fn random_baseline_is_seeded_and_clamped() {
        let g = generate(&SyntheticSpec {
            num_nodes: 60,
            num_hyperedges: 30,
            ..SyntheticSpec::default()
        })
        .unwrap();
        let a = random_injection(&g, 0.05, 5).unwrap();
        let b = random_injection(&g, 0.05, 5).unwrap();
        assert_eq!(a, b);
        for v in a.injected_node_ids() {
            for &x in a.graph.features.row(v) {
                assert!((0.0..=1.0).contains(&x), "clamped to feature range");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn recognizer_monotone_and_witnessed(
            num_nodes in 2usize..14,
            raw_edges in proptest::collection::vec(
                proptest::collection::vec(0usize..14, 1..5),
                1..10,
            ),
            tau1 in 1usize..4,
            extra in 0usize..3,
        ) {
            let edges: Vec<Vec<usize>> = raw_edges
                .iter()
                .map(|e| e.iter().map(|v| v % num_nodes).collect())
                .collect();
            let incidence = Incidence::build(&edges, num_nodes).unwrap();
            let tau2 = tau1 + extra;
            let small = pivotal_hyperedges(&incidence, tau1);
            let large = pivotal_hyperedges(&incidence, tau2);
            // Monotone in tau.
            prop_assert!(small.iter().all(|j| large.contains(j)));
            // Witness re-scan: every selected hyperedge has a low-degree node.
            for &j in &small {
                let witnessed = incidence.members(j).unwrap().iter().any(|&v| {
                    incidence.hyperdegree(v).unwrap() <= tau1
                });
                prop_assert!(witnessed);
            }
            // Completeness: unselected hyperedges have no witness.
            for j in 0..incidence.num_hyperedges() {
                if !small.contains(&j) {
                    let witnessed = incidence.members(j).unwrap().iter().any(|&v| {
                        incidence.hyperdegree(v).unwrap() <= tau1
                    });
                    prop_assert!(!witnessed);
                }
            }
        }

        #[test]
        fn budget_size_law(
            candidate_count in 1usize..50,
            num_nodes in 1usize..2000,
            eta_millis in 1u32..=50,
            seed in any::<u64>(),
        ) {
            let eta = eta_millis as f64 / 1000.0;
            let candidates: Vec<usize> = (0..candidate_count).collect();
            let sel = select_budget(&candidates, eta, num_nodes, seed).unwrap();
            let budget = (eta * num_nodes as f64).floor() as usize;
            prop_assert_eq!(sel.budget, budget);
            prop_assert_eq!(sel.hyperedges.len(), budget.min(candidate_count));
            prop_assert_eq!(sel.clipped, candidate_count < budget);
            // Without replacement: all distinct, all from the candidate set.
            let mut unique = sel.hyperedges.clone();
            unique.sort_unstable();
            unique.dedup();
            prop_assert_eq!(unique.len(), sel.hyperedges.len());
            prop_assert!(sel.hyperedges.iter().all(|j| *j < candidate_count));
        }
    }
}
