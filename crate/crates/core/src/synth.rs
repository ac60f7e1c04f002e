//! Seeded planted-partition hypergraph generator: predominantly single-class
//! hyperedges over round-robin class assignments, block-structured binary
//! features, and a stratified 50/25/25 split.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypergraph::{Hypergraph, Incidence, Masks};
use crate::numeric::DenseMatrix;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Error)]
#[error("invalid synthetic spec: {reason}")]
pub struct InvalidSpec {
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub num_hyperedges: usize,
    /// Probability a hyperedge draws all its members from one class.
    pub intra_class_probability: f64,
    pub size_min: usize,
    pub size_max: usize,
    pub feature_dim: usize,
    /// Probability of a 1 inside a node's own class block.
    pub signal_strength: f64,
    /// Probability of a 1 outside the class block.
    pub flip_probability: f64,
    pub allow_singletons: bool,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_nodes: 400,
            num_classes: 4,
            num_hyperedges: 200,
            intra_class_probability: 0.9,
            size_min: 3,
            size_max: 6,
            feature_dim: 32,
            signal_strength: 0.9,
            flip_probability: 0.05,
            allow_singletons: false,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), InvalidSpec> {
        let fail = |reason: &str| {
            Err(InvalidSpec {
                reason: reason.to_string(),
            })
        };
        if self.num_nodes == 0 || self.num_hyperedges == 0 {
            return fail("node and hyperedge counts must be positive");
        }
        if self.num_classes == 0 || self.num_classes > self.num_nodes {
            return fail("class count must be in [1, num_nodes]");
        }
        if !(0.0..=1.0).contains(&self.intra_class_probability) {
            return fail("intra-class probability must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.signal_strength)
            || !(0.0..=1.0).contains(&self.flip_probability)
        {
            return fail("signal strength and flip probability must be in [0, 1]");
        }
        let min_size = if self.allow_singletons { 1 } else { 2 };
        if self.size_min < min_size {
            return fail("size_min must be >= 2 unless singletons are allowed");
        }
        if self.size_min > self.size_max || self.size_max > self.num_nodes {
            return fail("hyperedge size range is inconsistent with node count");
        }
        if self.feature_dim < self.num_classes {
            return fail("feature dimension must be >= class count");
        }
        Ok(())
    }
}

/// Draw `count` distinct items from `pool` (partial Fisher-Yates).
fn sample_distinct(pool: &mut [usize], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let count = count.min(pool.len());
    for i in 0..count {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    pool[..count].to_vec()
}

pub fn generate(spec: &SyntheticSpec) -> Result<Hypergraph, InvalidSpec> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.num_nodes;
    let classes = spec.num_classes;

    // Round-robin class assignment keeps the classes balanced.
    let labels: Vec<Option<usize>> = (0..n).map(|v| Some(v % classes)).collect();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for v in 0..n {
        by_class[v % classes].push(v);
    }

    let mut edges = Vec::with_capacity(spec.num_hyperedges);
    let mut all_nodes: Vec<usize> = (0..n).collect();
    for _ in 0..spec.num_hyperedges {
        let size = rng.gen_range(spec.size_min..=spec.size_max);
        let members = if rng.gen_bool(spec.intra_class_probability) {
            let class = rng.gen_range(0..classes);
            let mut pool = by_class[class].clone();
            sample_distinct(&mut pool, size, &mut rng)
        } else {
            sample_distinct(&mut all_nodes, size, &mut rng)
        };
        edges.push(members);
    }

    // Block-indicator features: the class's block of width F / classes gets
    // ones with the signal probability, everything else with the flip
    // probability.
    let block = spec.feature_dim / classes;
    let mut features = DenseMatrix::zeros(n, spec.feature_dim);
    for v in 0..n {
        let class = v % classes;
        let lo = class * block;
        let hi = if class == classes - 1 {
            spec.feature_dim
        } else {
            lo + block
        };
        for c in 0..spec.feature_dim {
            let p = if (lo..hi).contains(&c) {
                spec.signal_strength
            } else {
                spec.flip_probability
            };
            if p > 0.0 && rng.gen_bool(p) {
                features.set(v, c, 1.0);
            }
        }
    }

    // Stratified 50/25/25 train/val/test split.
    let mut masks = Masks::empty(n);
    for members in &mut by_class {
        members.shuffle(&mut rng);
        let train_end = members.len() / 2;
        let val_end = train_end + (members.len() - train_end) / 2;
        for (rank, &v) in members.iter().enumerate() {
            if rank < train_end {
                masks.train[v] = true;
            } else if rank < val_end {
                masks.val[v] = true;
            } else {
                masks.test[v] = true;
            }
        }
    }

    let incidence = Incidence::build(&edges, n).map_err(|e| InvalidSpec {
        reason: format!("generator produced an invalid incidence: {e}"),
    })?;
    Ok(Hypergraph {
        incidence,
        features,
        labels,
        num_classes: classes,
        masks,
    })
}
