//! Numeric checks for the perturbation-propagation bounds and the
//! spectral-radius shrinkage of the inverse hyperedge degree matrix.
//!
//! The upper bound (triangle inequality on the hyperedge-to-node aggregation)
//! is unconditional. The amplification lower bound is asserted only where it
//! is literally true: as an exact identity for nodes incident to a single
//! hyperedge. For multi-edge nodes perturbation cancellation can defeat the
//! stated inequality, so those are reported as informational flags, never as
//! failures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypergraph::{AttackedHypergraph, Hypergraph, HypergraphError, Incidence};
use crate::numeric::DenseMatrix;

use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error(transparent)]
    Hypergraph(#[from] HypergraphError),
    #[error("attacked hypergraph was not derived from the clean one: {reason}")]
    NotDerivedFrom { reason: String },
}

/// A hypergraph together with per-hyperedge feature perturbations and the
/// per-node perturbations they induce through hyperedge-to-node aggregation:
/// `delta_x_i = (1/sqrt(d_v_i)) * sum_{e_j : i in e_j} w_j * delta_z_j`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbationScenario {
    pub incidence: Incidence,
    pub weights: Vec<f64>,
    /// M x width perturbations, one row per hyperedge.
    pub delta_z: DenseMatrix,
    /// N x width induced node perturbations (definitional, see above).
    pub delta_x: DenseMatrix,
}

impl PerturbationScenario {
    pub fn new(
        incidence: Incidence,
        weights: Vec<f64>,
        delta_z: DenseMatrix,
    ) -> Result<Self, HypergraphError> {
        let profile = incidence.degree_profile(&weights)?;
        if delta_z.rows() != incidence.num_hyperedges() {
            return Err(HypergraphError::WeightDimensionMismatch {
                expected: incidence.num_hyperedges(),
                actual: delta_z.rows(),
            });
        }
        let width = delta_z.cols();
        let mut delta_x = DenseMatrix::zeros(incidence.num_nodes(), width);
        for v in 0..incidence.num_nodes() {
            let degree = profile.node_degrees[v];
            if degree == 0.0 {
                continue;
            }
            let scale = 1.0 / degree.sqrt();
            for &j in incidence.incident_edges(v)? {
                let w = weights[j];
                for (o, z) in delta_x.row_mut(v).iter_mut().zip(delta_z.row(j)) {
                    *o += scale * w * z;
                }
            }
        }
        Ok(Self {
            incidence,
            weights,
            delta_z,
            delta_x,
        })
    }

    /// Random scenario: incidence with no empty hyperedges, weights in
    /// (0.5, 2], Gaussian perturbations.
    pub fn random(
        max_nodes: usize,
        max_edges: usize,
        width: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let n = rng.gen_range(2..=max_nodes.max(2));
        let m = rng.gen_range(1..=max_edges.max(1));
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let size = rng.gen_range(1..=n.min(5));
            let members: Vec<usize> = (0..size).map(|_| rng.gen_range(0..n)).collect();
            edges.push(members);
        }
        let incidence = Incidence::build(&edges, n).expect("non-empty members");
        let weights: Vec<f64> = (0..m).map(|_| rng.gen_range(0.5..2.0)).collect();
        let normal = Normal::new(0.0, 1.0).expect("valid normal");
        let delta_z = DenseMatrix::new(
            m,
            width,
            (0..m * width).map(|_| normal.sample(rng)).collect(),
        )
        .expect("finite samples");
        Self::new(incidence, weights, delta_z).expect("consistent shapes")
    }

    /// Random scenario whose perturbations share a common nonnegative
    /// support, the aligned regime in which the amplification inequality
    /// holds for every node.
    pub fn random_aligned(
        max_nodes: usize,
        max_edges: usize,
        width: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let mut scenario = Self::random(max_nodes, max_edges, width, rng);
        let m = scenario.delta_z.rows();
        let mut aligned = DenseMatrix::zeros(m, width);
        for j in 0..m {
            let magnitude = rng.gen_range(0.1..3.0);
            for c in 0..width {
                aligned.set(j, c, magnitude * (1.0 + c as f64));
            }
        }
        scenario = Self::new(scenario.incidence, scenario.weights, aligned)
            .expect("consistent shapes");
        scenario
    }
}

fn norm(row: &[f64]) -> f64 {
    row.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Margin record for one node: `slack = rhs - lhs`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundMargin {
    pub node: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpperBoundReport {
    pub margins: Vec<BoundMargin>,
    pub skipped_isolated: Vec<usize>,
}

impl UpperBoundReport {
    /// True iff every slack is >= -1e-10.
    pub fn holds(&self) -> bool {
        self.margins.iter().all(|m| m.slack >= -1e-10)
    }
}

/// Per-node dissipation bound:
/// `||delta_x_k|| <= (1/sqrt(d_v_k)) * sum_{e_j : k in e_j} w_j ||delta_z_j||`.
pub fn check_upper_bound(scenario: &PerturbationScenario) -> UpperBoundReport {
    let profile = scenario
        .incidence
        .degree_profile(&scenario.weights)
        .expect("scenario weights validated at construction");
    let mut margins = Vec::new();
    let mut skipped_isolated = Vec::new();
    for v in 0..scenario.incidence.num_nodes() {
        let degree = profile.node_degrees[v];
        if degree == 0.0 {
            skipped_isolated.push(v);
            continue;
        }
        let lhs = norm(scenario.delta_x.row(v));
        let mut rhs = 0.0;
        for &j in scenario.incidence.incident_edges(v).expect("in range") {
            rhs += scenario.weights[j] * norm(scenario.delta_z.row(j));
        }
        rhs /= degree.sqrt();
        margins.push(BoundMargin {
            node: v,
            lhs,
            rhs,
            slack: rhs - lhs,
        });
    }
    UpperBoundReport {
        margins,
        skipped_isolated,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SinglePathReport {
    /// Nodes with hyperdegree exactly 1: the identity
    /// `||delta_x|| = (w_e / sqrt(d_v)) ||delta_z_e||` must hold to 1e-10.
    pub single_path: Vec<BoundMargin>,
    /// Nodes with 1 < hyperdegree <= tau where the stated lower bound was
    /// checked; violations land in `counterexamples`, informational only.
    pub multi_edge: Vec<BoundMargin>,
    pub counterexamples: Vec<usize>,
}

impl SinglePathReport {
    /// True iff the single-path identity holds everywhere it applies.
    pub fn exactness_holds(&self) -> bool {
        self.single_path.iter().all(|m| m.slack.abs() <= 1e-10)
    }
}

/// Amplification check restricted to nodes with hyperdegree <= tau.
pub fn check_single_path_amplification(
    scenario: &PerturbationScenario,
    tau: usize,
) -> SinglePathReport {
    let profile = scenario
        .incidence
        .degree_profile(&scenario.weights)
        .expect("scenario weights validated at construction");
    let mut single_path = Vec::new();
    let mut multi_edge = Vec::new();
    let mut counterexamples = Vec::new();
    for v in 0..scenario.incidence.num_nodes() {
        let incident = scenario.incidence.incident_edges(v).expect("in range");
        let hyperdegree = incident.len();
        if hyperdegree == 0 || hyperdegree > tau {
            continue;
        }
        let lhs = norm(scenario.delta_x.row(v));
        let inv_sqrt = 1.0 / profile.node_degrees[v].sqrt();
        if hyperdegree == 1 {
            let j = incident[0];
            let rhs = inv_sqrt * scenario.weights[j] * norm(scenario.delta_z.row(j));
            single_path.push(BoundMargin {
                node: v,
                lhs,
                rhs,
                slack: rhs - lhs,
            });
        } else {
            let rhs = inv_sqrt
                * incident
                    .iter()
                    .map(|&j| scenario.weights[j] * norm(scenario.delta_z.row(j)))
                    .fold(f64::INFINITY, f64::min);
            if lhs < rhs - 1e-10 {
                counterexamples.push(v);
            }
            multi_edge.push(BoundMargin {
                node: v,
                lhs,
                rhs,
                slack: lhs - rhs,
            });
        }
    }
    SinglePathReport {
        single_path,
        multi_edge,
        counterexamples,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralShrinkage {
    /// `max_j 1 / D_E[j]` on the clean hypergraph.
    pub clean_radius: f64,
    /// `max_j 1 / D_E[j]` on the attacked hypergraph.
    pub attacked_radius: f64,
    pub holds: bool,
}

/// Verify `rho(inv(D_E_attacked)) <= rho(inv(D_E_clean))`.
///
/// Injection only grows hyperedge degrees, so a `false` result signals a bug
/// in the injection transform, not a property of the attack.
pub fn check_spectral_shrinkage(
    clean: &Hypergraph,
    attacked: &AttackedHypergraph,
) -> Result<SpectralShrinkage, BoundsError> {
    verify_derivation(clean, attacked)?;
    let clean_profile = clean
        .incidence
        .degree_profile(&clean.incidence.unit_weights())?;
    let attacked_profile = attacked
        .graph
        .incidence
        .degree_profile(&attacked.graph.incidence.unit_weights())?;
    // D_E inverse is diagonal, so its spectral radius is the max inverse entry.
    let radius = |degrees: &[f64]| {
        degrees
            .iter()
            .map(|&d| 1.0 / d)
            .fold(0.0, f64::max)
    };
    let clean_radius = radius(&clean_profile.hyperedge_degrees);
    let attacked_radius = radius(&attacked_profile.hyperedge_degrees);
    Ok(SpectralShrinkage {
        clean_radius,
        attacked_radius,
        holds: attacked_radius <= clean_radius + 1e-12,
    })
}

fn verify_derivation(
    clean: &Hypergraph,
    attacked: &AttackedHypergraph,
) -> Result<(), BoundsError> {
    let n = clean.num_nodes();
    if attacked.original_nodes != n {
        return Err(BoundsError::NotDerivedFrom {
            reason: format!(
                "original node count {} does not match clean graph ({n})",
                attacked.original_nodes
            ),
        });
    }
    if attacked.graph.num_hyperedges() != clean.num_hyperedges() {
        return Err(BoundsError::NotDerivedFrom {
            reason: "hyperedge counts differ".into(),
        });
    }
    if attacked.graph.num_nodes() != n + attacked.injected_count
        || attacked.origin_map.len() != attacked.injected_count
    {
        return Err(BoundsError::NotDerivedFrom {
            reason: "injected bookkeeping inconsistent".into(),
        });
    }
    for (j, members) in clean.incidence.edges().iter().enumerate() {
        let after: Vec<usize> = attacked
            .graph
            .incidence
            .members(j)?
            .iter()
            .copied()
            .filter(|&v| v < n)
            .collect();
        if &after != members {
            return Err(BoundsError::NotDerivedFrom {
                reason: format!("original members of hyperedge {j} were modified"),
            });
        }
    }
    for (&node, &target) in &attacked.origin_map {
        let incident = attacked
            .graph
            .incidence
            .incident_edges(node)?;
        if incident != [target] {
            return Err(BoundsError::NotDerivedFrom {
                reason: format!("injected node {node} is not solely in hyperedge {target}"),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::{inject_nodes, InjectionPlan, Masks};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scenario(
        edges: &[Vec<usize>],
        n: usize,
        weights: Vec<f64>,
        delta_z: Vec<Vec<f64>>,
    ) -> PerturbationScenario {
        let incidence = Incidence::build(edges, n).unwrap();
        let dz = DenseMatrix::from_rows(&delta_z).unwrap();
        PerturbationScenario::new(incidence, weights, dz).unwrap()
    }

    #[test]
    fn single_incident_edge_gives_zero_slack() {
        let s = scenario(&[vec![0]], 1, vec![1.5], vec![vec![3.0, 4.0]]);
        let report = check_upper_bound(&s);
        assert_eq!(report.margins.len(), 1);
        assert!(report.margins[0].slack.abs() < 1e-12);
    }

    #[test]
    fn zero_perturbations_give_zero_bounds() {
        let s = scenario(
            &[vec![0, 1], vec![1]],
            2,
            vec![1.0, 1.0],
            vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        );
        let report = check_upper_bound(&s);
        for m in &report.margins {
            assert_eq!(m.lhs, 0.0);
            assert_eq!(m.rhs, 0.0);
        }
        assert!(report.holds());
    }

    #[test]
    fn upper_bound_holds_on_random_scenarios() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..50 {
            let s = PerturbationScenario::random(30, 20, 6, &mut rng);
            let report = check_upper_bound(&s);
            assert!(report.holds());
        }
    }

    #[test]
    fn single_path_identity_exact() {
        // d_h(v) = 1, w = 1, d_v = 1, ||delta_z|| = 3 -> ||delta_x|| = 3.
        let s = scenario(&[vec![0]], 1, vec![1.0], vec![vec![3.0, 0.0]]);
        let report = check_single_path_amplification(&s, 1);
        assert_eq!(report.single_path.len(), 1);
        assert!((report.single_path[0].lhs - 3.0).abs() < 1e-12);
        assert!(report.exactness_holds());
    }

    #[test]
    fn cancellation_is_flagged_not_failed() {
        // Node 0 in two hyperedges with opposite perturbations: delta_x = 0,
        // strictly below the stated lower bound.
        let s = scenario(
            &[vec![0, 1], vec![0, 2]],
            3,
            vec![1.0, 1.0],
            vec![vec![1.0, -2.0], vec![-1.0, 2.0]],
        );
        let report = check_single_path_amplification(&s, 2);
        assert!(report.counterexamples.contains(&0));
        assert!(report.exactness_holds(), "no d_h=1 node may fail");
    }

    #[test]
    fn aligned_scenarios_satisfy_lower_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..30 {
            let s = PerturbationScenario::random_aligned(20, 12, 4, &mut rng);
            let report = check_single_path_amplification(&s, 3);
            assert!(report.counterexamples.is_empty());
            assert!(report.exactness_holds());
        }
    }

    fn small_graph() -> Hypergraph {
        Hypergraph {
            incidence: Incidence::build(&[vec![0, 1], vec![1, 2, 3], vec![3]], 4).unwrap(),
            features: DenseMatrix::zeros(4, 2),
            labels: vec![None; 4],
            num_classes: 0,
            masks: Masks::empty(4),
        }
    }

    #[test]
    fn shrinkage_on_unique_minimum_degree_edge() {
        let g = small_graph();
        // Hyperedge 2 is the unique degree-1 edge, so it is the argmax of
        // the inverse degrees; injecting there strictly shrinks the radius.
        let plan = InjectionPlan {
            entries: vec![(2, vec![0.0, 0.0])],
            budget: 1,
            selection_seed: 0,
        };
        let attacked = inject_nodes(&g, &plan).unwrap();
        let shrink = check_spectral_shrinkage(&g, &attacked).unwrap();
        assert!(shrink.holds);
        assert!(shrink.attacked_radius < shrink.clean_radius);
    }

    #[test]
    fn shrinkage_on_empty_plan_is_equality() {
        let g = small_graph();
        let attacked = inject_nodes(&g, &InjectionPlan::empty()).unwrap();
        let shrink = check_spectral_shrinkage(&g, &attacked).unwrap();
        assert!(shrink.holds);
        assert_eq!(shrink.clean_radius, shrink.attacked_radius);
    }

    #[test]
    fn shrinkage_holds_for_any_valid_plan() {
        let g = small_graph();
        let plan = InjectionPlan {
            entries: vec![(0, vec![1.0, 1.0]), (1, vec![2.0, 2.0])],
            budget: 2,
            selection_seed: 0,
        };
        let attacked = inject_nodes(&g, &plan).unwrap();
        assert!(check_spectral_shrinkage(&g, &attacked).unwrap().holds);
    }

    #[test]
    fn foreign_attacked_graph_rejected() {
        let g = small_graph();
        let other = Hypergraph {
            incidence: Incidence::build(&[vec![0, 1], vec![1, 2], vec![2]], 4).unwrap(),
            ..g.clone()
        };
        let plan = InjectionPlan {
            entries: vec![(0, vec![0.0, 0.0])],
            budget: 1,
            selection_seed: 0,
        };
        let attacked = inject_nodes(&other, &plan).unwrap();
        assert!(matches!(
            check_spectral_shrinkage(&g, &attacked),
            Err(BoundsError::NotDerivedFrom { .. })
        ));
    }

    #[test]
    fn scenario_round_trips_through_serde() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = PerturbationScenario::random(10, 6, 3, &mut rng);
        let json = serde_json::to_string(&s).unwrap();
        let back: PerturbationScenario = serde_json::from_str(&json).unwrap();
        let report_a = check_upper_bound(&s);
        let report_b = check_upper_bound(&back);
        assert_eq!(report_a.margins.len(), report_b.margins.len());
        for (a, b) in report_a.margins.iter().zip(&report_b.margins) {
            assert_eq!(a.slack.to_bits(), b.slack.to_bits());
        }
    }
}
