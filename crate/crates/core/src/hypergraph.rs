//! Hypergraph representation: incidence structure, degree profiles, validity
//! checks, and the injection transform that appends malicious nodes.
//!
//! Incidence is stored column-major: one sorted, deduplicated node list per
//! hyperedge, plus a per-node index of incident hyperedges for O(d) degree
//! queries. Dense materialization happens only when the numeric layer asks
//! for it.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::DenseMatrix;

#[derive(Debug, Error)]
pub enum HypergraphError {
    #[error("hyperedge {hyperedge} is empty")]
    EmptyHyperedge { hyperedge: usize },
    #[error("node id {node} out of range (num_nodes = {num_nodes})")]
    NodeIdOutOfRange { node: usize, num_nodes: usize },
    #[error("hyperedge id {hyperedge} out of range (num_hyperedges = {num_hyperedges})")]
    HyperedgeIdOutOfRange {
        hyperedge: usize,
        num_hyperedges: usize,
    },
    #[error("hyperedge {hyperedge} targeted more than once in one plan")]
    DuplicateTargetHyperedge { hyperedge: usize },
    #[error("malicious feature vector has length {actual}, expected {expected}")]
    FeatureDimensionMismatch { expected: usize, actual: usize },
    #[error("weight vector has length {actual}, expected {expected}")]
    WeightDimensionMismatch { expected: usize, actual: usize },
    #[error("hyperedge weight at {hyperedge} is {weight}, must be > 0")]
    NonPositiveWeight { hyperedge: usize, weight: f64 },
}

/// Sparse binary incidence structure of a hypergraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incidence {
    num_nodes: usize,
    /// Sorted unique member node ids per hyperedge (column-major storage).
    edges: Vec<Vec<usize>>,
    /// Incident hyperedge ids per node (row index).
    node_edges: Vec<Vec<usize>>,
}

impl Incidence {
    /// Build from raw member lists. Duplicate node ids within a hyperedge
    /// collapse to one entry (set semantics); empty hyperedges are rejected.
    pub fn build(hyperedges: &[Vec<usize>], num_nodes: usize) -> Result<Self, HypergraphError> {
        let mut edges = Vec::with_capacity(hyperedges.len());
        let mut node_edges = vec![Vec::new(); num_nodes];
        for (j, members) in hyperedges.iter().enumerate() {
            if members.is_empty() {
                return Err(HypergraphError::EmptyHyperedge { hyperedge: j });
            }
            let mut sorted = members.clone();
            sorted.sort_unstable();
            sorted.dedup();
            for &v in &sorted {
                if v >= num_nodes {
                    return Err(HypergraphError::NodeIdOutOfRange {
                        node: v,
                        num_nodes,
                    });
                }
                node_edges[v].push(j);
            }
            edges.push(sorted);
        }
        Ok(Self {
            num_nodes,
            edges,
            node_edges,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_hyperedges(&self) -> usize {
        self.edges.len()
    }

    /// Member node ids of hyperedge `j`, sorted and unique.
    pub fn members(&self, j: usize) -> Result<&[usize], HypergraphError> {
        self.edges
            .get(j)
            .map(Vec::as_slice)
            .ok_or(HypergraphError::HyperedgeIdOutOfRange {
                hyperedge: j,
                num_hyperedges: self.edges.len(),
            })
    }

    pub fn edges(&self) -> &[Vec<usize>] {
        &self.edges
    }

    /// Hyperedges incident to node `v`.
    pub fn incident_edges(&self, v: usize) -> Result<&[usize], HypergraphError> {
        self.node_edges
            .get(v)
            .map(Vec::as_slice)
            .ok_or(HypergraphError::NodeIdOutOfRange {
                node: v,
                num_nodes: self.num_nodes,
            })
    }

    /// Isolation degree of a node: the number of hyperedges containing it.
    pub fn hyperdegree(&self, v: usize) -> Result<usize, HypergraphError> {
        Ok(self.incident_edges(v)?.len())
    }

    /// Degree diagonals under the given hyperedge weights.
    pub fn degree_profile(&self, weights: &[f64]) -> Result<DegreeProfile, HypergraphError> {
        if weights.len() != self.edges.len() {
            return Err(HypergraphError::WeightDimensionMismatch {
                expected: self.edges.len(),
                actual: weights.len(),
            });
        }
        if let Some((j, &w)) = weights.iter().enumerate().find(|(_, &w)| w <= 0.0) {
            return Err(HypergraphError::NonPositiveWeight {
                hyperedge: j,
                weight: w,
            });
        }
        let mut node_degrees = vec![0.0; self.num_nodes];
        let mut hyperedge_degrees = vec![0.0; self.edges.len()];
        for (j, members) in self.edges.iter().enumerate() {
            hyperedge_degrees[j] = members.len() as f64;
            for &v in members {
                node_degrees[v] += weights[j];
            }
        }
        Ok(DegreeProfile {
            node_degrees,
            hyperedge_degrees,
            hyperedge_weights: weights.to_vec(),
        })
    }

    /// All-ones weight vector, the default everywhere.
    pub fn unit_weights(&self) -> Vec<f64> {
        vec![1.0; self.edges.len()]
    }

    /// Dense 0/1 materialization, N rows x M columns.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut h = DenseMatrix::zeros(self.num_nodes, self.edges.len());
        for (j, members) in self.edges.iter().enumerate() {
            for &v in members {
                h.set(v, j, 1.0);
            }
        }
        h
    }
}

/// Node/hyperedge degree diagonals plus the weight diagonal they were built
/// from.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeProfile {
    pub node_degrees: Vec<f64>,
    pub hyperedge_degrees: Vec<f64>,
    pub hyperedge_weights: Vec<f64>,
}

/// Disjoint train/validation/test node sets.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Masks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl Masks {
    pub fn empty(num_nodes: usize) -> Self {
        Self {
            train: vec![false; num_nodes],
            val: vec![false; num_nodes],
            test: vec![false; num_nodes],
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.train.iter().chain(&self.val).chain(&self.test).any(|&b| b)
    }
}

/// A hypergraph with node features, optional per-node labels, and dataset
/// masks. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    pub incidence: Incidence,
    /// N x F node feature matrix.
    pub features: DenseMatrix,
    /// Per-node class in `[0, num_classes)`; `None` = unlabeled.
    pub labels: Vec<Option<usize>>,
    pub num_classes: usize,
    pub masks: Masks,
}

impl Hypergraph {
    pub fn num_nodes(&self) -> usize {
        self.incidence.num_nodes()
    }

    pub fn num_hyperedges(&self) -> usize {
        self.incidence.num_hyperedges()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    /// Check every structural invariant; returns one entry per violation.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        let n = self.num_nodes();
        for (j, members) in self.incidence.edges().iter().enumerate() {
            if members.is_empty() {
                violations.push(Violation::EmptyHyperedge { hyperedge: j });
            }
            for &v in members {
                if v >= n {
                    violations.push(Violation::MemberOutOfRange {
                        hyperedge: j,
                        node: v,
                    });
                }
            }
        }
        if self.features.rows() != n {
            violations.push(Violation::FeatureRowMismatch {
                expected: n,
                actual: self.features.rows(),
            });
        }
        if self.features.data().iter().any(|v| !v.is_finite()) {
            violations.push(Violation::NonFiniteFeature);
        }
        if self.labels.len() != n {
            violations.push(Violation::LabelLengthMismatch {
                expected: n,
                actual: self.labels.len(),
            });
        }
        for (v, label) in self.labels.iter().enumerate() {
            if let Some(c) = label {
                if *c >= self.num_classes {
                    violations.push(Violation::LabelOutOfRange { node: v, label: *c });
                }
            }
        }
        for (name, mask) in [
            ("train", &self.masks.train),
            ("val", &self.masks.val),
            ("test", &self.masks.test),
        ] {
            if mask.len() != n {
                violations.push(Violation::MaskLengthMismatch {
                    mask: name,
                    expected: n,
                    actual: mask.len(),
                });
            }
        }
        let len = self
            .masks
            .train
            .len()
            .min(self.masks.val.len())
            .min(self.masks.test.len());
        for v in 0..len {
            let hits = self.masks.train[v] as u8 + self.masks.val[v] as u8 + self.masks.test[v] as u8;
            if hits > 1 {
                violations.push(Violation::OverlappingMasks { node: v });
            }
        }
        violations
    }
}

/// One violated invariant, with its location.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("hyperedge {hyperedge} is empty")]
    EmptyHyperedge { hyperedge: usize },
    #[error("hyperedge {hyperedge} contains out-of-range node {node}")]
    MemberOutOfRange { hyperedge: usize, node: usize },
    #[error("feature matrix has {actual} rows, expected {expected}")]
    FeatureRowMismatch { expected: usize, actual: usize },
    #[error("feature matrix contains a non-finite entry")]
    NonFiniteFeature,
    #[error("labels vector has length {actual}, expected {expected}")]
    LabelLengthMismatch { expected: usize, actual: usize },
    #[error("node {node} has label {label} outside the class range")]
    LabelOutOfRange { node: usize, label: usize },
    #[error("{mask} mask has length {actual}, expected {expected}")]
    MaskLengthMismatch {
        mask: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("node {node} belongs to more than one mask")]
    OverlappingMasks { node: usize },
}

/// Target hyperedges paired with the malicious feature vectors to inject.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionPlan {
    /// `(hyperedge id, feature vector)` pairs; hyperedge ids unique.
    pub entries: Vec<(usize, Vec<f64>)>,
    /// Requested budget before any clipping.
    pub budget: usize,
    pub selection_seed: u64,
}

impl InjectionPlan {
    pub fn empty() -> Self {
        Self {
            entries: Vec::new(),
            budget: 0,
            selection_seed: 0,
        }
    }
}

/// Result of injecting malicious nodes: the expanded graph plus bookkeeping
/// about where each injected node went.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackedHypergraph {
    /// Expanded graph: original nodes first, injected nodes appended with
    /// ids `N..N+m`, no labels, in no mask.
    pub graph: Hypergraph,
    pub original_nodes: usize,
    pub injected_count: usize,
    /// Malicious node id -> target hyperedge id.
    pub origin_map: BTreeMap<usize, usize>,
}

impl AttackedHypergraph {
    pub fn injected_node_ids(&self) -> std::ops::Range<usize> {
        self.original_nodes..self.original_nodes + self.injected_count
    }
}

/// Append one malicious node per plan entry to its target hyperedge.
///
/// Original incidence entries, labels, and masks are untouched; injected
/// nodes carry no label and belong to no mask.
pub fn inject_nodes(
    graph: &Hypergraph,
    plan: &InjectionPlan,
) -> Result<AttackedHypergraph, HypergraphError> {
    let n = graph.num_nodes();
    let m_edges = graph.num_hyperedges();
    let f = graph.feature_dim();

    let mut seen = vec![false; m_edges];
    for (j, features) in &plan.entries {
        if *j >= m_edges {
            return Err(HypergraphError::HyperedgeIdOutOfRange {
                hyperedge: *j,
                num_hyperedges: m_edges,
            });
        }
        if seen[*j] {
            return Err(HypergraphError::DuplicateTargetHyperedge { hyperedge: *j });
        }
        seen[*j] = true;
        if features.len() != f {
            return Err(HypergraphError::FeatureDimensionMismatch {
                expected: f,
                actual: features.len(),
            });
        }
    }

    let injected = plan.entries.len();
    let mut edges: Vec<Vec<usize>> = graph.incidence.edges().to_vec();
    let mut origin_map = BTreeMap::new();
    let mut feature_rows: Vec<f64> = graph.features.data().to_vec();
    for (k, (j, features)) in plan.entries.iter().enumerate() {
        let node_id = n + k;
        edges[*j].push(node_id);
        origin_map.insert(node_id, *j);
        feature_rows.extend_from_slice(features);
    }

    let incidence = Incidence::build(&edges, n + injected)?;
    let features = DenseMatrix::new(n + injected, f, feature_rows).map_err(|_| {
        HypergraphError::FeatureDimensionMismatch {
            expected: f,
            actual: f,
        }
    })?;
    let mut labels = graph.labels.clone();
    labels.resize(n + injected, None);
    let mut masks = graph.masks.clone();
    masks.train.resize(n + injected, false);
    masks.val.resize(n + injected, false);
    masks.test.resize(n + injected, false);

    Ok(AttackedHypergraph {
        graph: Hypergraph {
            incidence,
            features,
            labels,
            num_classes: graph.num_classes,
            masks,
        },
        original_nodes: n,
        injected_count: injected,
        origin_map,
    })
}
