//! Experiment orchestration: clean / attacked / random-baseline training of
//! both victim models over a seed list, bound checks, and the report that
//! ties it all together.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{pivotal_injection, random_injection, AttackConfig, AttackError};
use crate::bounds::{
    check_single_path_amplification, check_spectral_shrinkage, check_upper_bound, BoundsError,
    PerturbationScenario,
};
use crate::hypergraph::Hypergraph;
use crate::models::{evaluate, train, Metrics, ModelError, ModelKind, TrainConfig};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

/// Mean / sample standard deviation over the seed list, with the raw
/// per-seed values kept for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub mean: f64,
    pub std_dev: f64,
    pub per_seed: Vec<f64>,
}

impl SummaryStat {
    fn from_values(per_seed: Vec<f64>) -> Self {
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().sum::<f64>() / n;
        let std_dev = if per_seed.len() > 1 {
            (per_seed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std_dev,
            per_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioStats {
    pub accuracy: SummaryStat,
    pub macro_f1: SummaryStat,
    /// Full per-seed metrics, including the per-class breakdown.
    pub per_seed_metrics: Vec<Metrics>,
}

impl ScenarioStats {
    fn from_metrics(metrics: &[Metrics]) -> Self {
        Self {
            accuracy: SummaryStat::from_values(metrics.iter().map(|m| m.accuracy).collect()),
            macro_f1: SummaryStat::from_values(metrics.iter().map(|m| m.macro_f1).collect()),
            per_seed_metrics: metrics.to_vec(),
        }
    }
}

/// Drops are `clean - attacked`; positive numbers mean the attack hurt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaBlock {
    pub accuracy_drop: f64,
    pub macro_f1_drop: f64,
    pub random_accuracy_drop: f64,
    pub random_macro_f1_drop: f64,
    /// Random-baseline accuracy minus attacked accuracy at equal budget.
    pub accuracy_gap_vs_random: f64,
    pub macro_f1_gap_vs_random: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub model: String,
    pub clean: ScenarioStats,
    pub pivotal: ScenarioStats,
    pub random: ScenarioStats,
    pub deltas: DeltaBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackRunSummary {
    pub seed: u64,
    pub budget: usize,
    pub injected: usize,
    pub candidate_count: usize,
    pub clipped: bool,
    pub dropped_zero_norm: Vec<usize>,
    pub final_mean_cosine: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsSummary {
    pub scenarios_checked: usize,
    pub upper_bound_ok: bool,
    pub single_path_exactness_ok: bool,
    pub spectral_shrinkage_ok: bool,
}

impl BoundsSummary {
    pub fn all_ok(&self) -> bool {
        self.upper_bound_ok && self.single_path_exactness_ok && self.spectral_shrinkage_ok
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tool_version: String,
    pub dataset: String,
    pub seeds: Vec<u64>,
    pub attack_config: AttackConfig,
    pub train_config: TrainConfig,
    pub models: Vec<ModelReport>,
    pub attack_runs: Vec<AttackRunSummary>,
    pub bound_checks: BoundsSummary,
    /// Measured stage durations; populated only on explicit request since
    /// they break byte-for-byte report reproducibility.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

impl ExperimentReport {
    /// Every float must be finite, and every metric value within [0, 1].
    pub fn validate_finite(&self) -> Result<(), String> {
        let check = |value: f64, field: &str| -> Result<(), String> {
            if !value.is_finite() {
                return Err(field.to_string());
            }
            Ok(())
        };
        let check_unit = |value: f64, field: &str| -> Result<(), String> {
            check(value, field)?;
            if !(0.0..=1.0).contains(&value) {
                return Err(format!("{field} outside [0, 1]"));
            }
            Ok(())
        };
        for model in &self.models {
            for (name, stats) in [
                ("clean", &model.clean),
                ("pivotal", &model.pivotal),
                ("random", &model.random),
            ] {
                for stat in [&stats.accuracy, &stats.macro_f1] {
                    check_unit(stat.mean, &format!("{}.{name}.mean", model.model))?;
                    check(stat.std_dev, &format!("{}.{name}.std_dev", model.model))?;
                    for (i, &v) in stat.per_seed.iter().enumerate() {
                        check_unit(v, &format!("{}.{name}.per_seed[{i}]", model.model))?;
                    }
                }
                for (i, metrics) in stats.per_seed_metrics.iter().enumerate() {
                    for class in &metrics.per_class {
                        for (value, what) in [
                            (class.precision, "precision"),
                            (class.recall, "recall"),
                            (class.f1, "f1"),
                        ] {
                            check_unit(
                                value,
                                &format!(
                                    "{}.{name}[{i}].class[{}].{what}",
                                    model.model, class.class
                                ),
                            )?;
                        }
                    }
                }
            }
            for (value, field) in [
                (model.deltas.accuracy_drop, "accuracy_drop"),
                (model.deltas.macro_f1_drop, "macro_f1_drop"),
                (model.deltas.random_accuracy_drop, "random_accuracy_drop"),
                (model.deltas.random_macro_f1_drop, "random_macro_f1_drop"),
                (model.deltas.accuracy_gap_vs_random, "accuracy_gap_vs_random"),
                (model.deltas.macro_f1_gap_vs_random, "macro_f1_gap_vs_random"),
            ] {
                check(value, &format!("{}.deltas.{field}", model.model))?;
            }
        }
        for run in &self.attack_runs {
            check(run.final_mean_cosine, "attack_runs.final_mean_cosine")?;
            if let Some(v) = run.initial_loss {
                check(v, "attack_runs.initial_loss")?;
            }
            if let Some(v) = run.final_loss {
                check(v, "attack_runs.final_loss")?;
            }
        }
        if let Some(timings) = &self.timings_ms {
            for (key, &v) in timings {
                check(v, &format!("timings_ms.{key}"))?;
            }
        }
        Ok(())
    }
}

/// Number of random perturbation scenarios swept per experiment.
const BOUND_SCENARIOS: usize = 20;

/// Run the full poisoning experiment:
/// `{clean, pivotal attack, random baseline} x {spectral, mean-aggregation}
/// x seeds`, evaluated on the original test nodes, plus bound checks.
///
/// Returns the report and the measured per-stage wall times separately; the
/// caller decides whether timings belong in the serialized report.
pub fn run_experiment(
    graph: &Hypergraph,
    dataset: &str,
    attack_config: &AttackConfig,
    train_config: &TrainConfig,
    seeds: &[u64],
) -> Result<(ExperimentReport, BTreeMap<String, f64>), ExperimentError> {
    let mut timings = BTreeMap::new();
    let mut attack_runs = Vec::with_capacity(seeds.len());
    let mut spectral_ok = true;

    let kinds = [ModelKind::Spectral, ModelKind::MeanAggregation];
    // metrics[kind][scenario] -> per-seed list; scenarios: clean, pivotal, random.
    let mut collected: Vec<[Vec<Metrics>; 3]> =
        kinds.iter().map(|_| [vec![], vec![], vec![]]).collect();

    let attack_started = Instant::now();
    let mut attacked_graphs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let mut config = attack_config.clone();
        config.seed = seed;
        let (attacked, report) = pivotal_injection(graph, &config)?;
        let random = random_injection(graph, config.eta, seed)?;
        spectral_ok &= check_spectral_shrinkage(graph, &attacked)?.holds;
        spectral_ok &= check_spectral_shrinkage(graph, &random)?.holds;
        attack_runs.push(AttackRunSummary {
            seed,
            budget: report.budget,
            injected: attacked.injected_count,
            candidate_count: report.candidate_count,
            clipped: report.clipped,
            dropped_zero_norm: report.dropped_zero_norm.clone(),
            final_mean_cosine: report.final_mean_cosine,
            initial_loss: report.loss_trace.first().copied(),
            final_loss: report.loss_trace.last().copied(),
        });
        attacked_graphs.push((seed, attacked, random));
    }
    timings.insert(
        "attack".to_string(),
        attack_started.elapsed().as_secs_f64() * 1e3,
    );

    let train_started = Instant::now();
    for (seed, attacked, random) in &attacked_graphs {
        let mut config = train_config.clone();
        config.seed = *seed;
        for (k, &kind) in kinds.iter().enumerate() {
            let scenarios = [graph, &attacked.graph, &random.graph];
            for (s, scenario_graph) in scenarios.into_iter().enumerate() {
                let outcome = train(scenario_graph, kind, &config)?;
                // Masks on attacked graphs are padded with `false`, so only
                // original test nodes are ever scored.
                let metrics =
                    evaluate(&outcome.params, scenario_graph, &scenario_graph.masks.test)?;
                collected[k][s].push(metrics);
            }
        }
    }
    timings.insert(
        "train_eval".to_string(),
        train_started.elapsed().as_secs_f64() * 1e3,
    );

    let bounds_started = Instant::now();
    let mut upper_ok = true;
    let mut single_ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.first().copied().unwrap_or(0));
    for _ in 0..BOUND_SCENARIOS {
        let scenario = PerturbationScenario::random(30, 20, 8, &mut rng);
        upper_ok &= check_upper_bound(&scenario).holds();
        single_ok &= check_single_path_amplification(&scenario, attack_config.tau)
            .exactness_holds();
    }
    timings.insert(
        "bound_checks".to_string(),
        bounds_started.elapsed().as_secs_f64() * 1e3,
    );

    let models = kinds
        .iter()
        .zip(&collected)
        .map(|(&kind, per_scenario)| {
            let clean = ScenarioStats::from_metrics(&per_scenario[0]);
            let pivotal = ScenarioStats::from_metrics(&per_scenario[1]);
            let random = ScenarioStats::from_metrics(&per_scenario[2]);
            let deltas = DeltaBlock {
                accuracy_drop: clean.accuracy.mean - pivotal.accuracy.mean,
                macro_f1_drop: clean.macro_f1.mean - pivotal.macro_f1.mean,
                random_accuracy_drop: clean.accuracy.mean - random.accuracy.mean,
                random_macro_f1_drop: clean.macro_f1.mean - random.macro_f1.mean,
                accuracy_gap_vs_random: random.accuracy.mean - pivotal.accuracy.mean,
                macro_f1_gap_vs_random: random.macro_f1.mean - pivotal.macro_f1.mean,
            };
            ModelReport {
                model: kind.as_str().to_string(),
                clean,
                pivotal,
                random,
                deltas,
            }
        })
        .collect();

    let report = ExperimentReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        dataset: dataset.to_string(),
        seeds: seeds.to_vec(),
        attack_config: attack_config.clone(),
        train_config: train_config.clone(),
        models,
        attack_runs,
        bound_checks: BoundsSummary {
            scenarios_checked: BOUND_SCENARIOS,
            upper_bound_ok: upper_ok,
            single_path_exactness_ok: single_ok,
            spectral_shrinkage_ok: spectral_ok,
        },
        timings_ms: None,
    };
    Ok((report, timings))
}
