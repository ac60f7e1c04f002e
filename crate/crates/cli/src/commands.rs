//! The six subcommands.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use hginject_core::attack::{
    pivotal_injection, random_injection, AttackConfig, AttackError,
};
use hginject_core::bounds::{
    check_single_path_amplification, check_spectral_shrinkage, check_upper_bound,
    PerturbationScenario,
};
use hginject_core::experiment::{run_experiment, ExperimentError};
use hginject_core::hypergraph::{inject_nodes, Hypergraph, InjectionPlan};
use hginject_core::io::{
    parse_dataset, write_dataset, write_json, write_report, DatasetPaths,
};
use hginject_core::models::{self, HgnnParams, ModelError, ModelKind, TrainConfig};
use hginject_core::numeric::DenseMatrix;
use hginject_core::synth::{generate, SyntheticSpec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{out_path, ConfigFile};
use crate::{
    AblationFlag, AttackArgs, AttackFlags, BaselineKind, CheckBoundsArgs, CliError, EvaluateArgs,
    GenSynthArgs, MaskChoice, ModelChoice, PipelineArgs, TrainArgs, TrainFlags,
};

fn data_error(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

fn attack_error(e: AttackError) -> CliError {
    match e {
        AttackError::InvalidConfig { .. } => CliError::Usage(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

fn model_error(e: ModelError) -> CliError {
    match e {
        ModelError::InvalidConfig { .. } => CliError::Usage(e.to_string()),
        other => CliError::Data(other.to_string()),
    }
}

fn experiment_error(e: ExperimentError) -> CliError {
    match e {
        ExperimentError::Attack(e) => attack_error(e),
        ExperimentError::Model(e) => model_error(e),
        ExperimentError::Bounds(e) => CliError::Data(e.to_string()),
    }
}

fn resolve_attack_config(
    flags: &AttackFlags,
    file: &ConfigFile,
    seed: u64,
) -> Result<AttackConfig, CliError> {
    let defaults = AttackConfig::default();
    let mut config = AttackConfig {
        eta: file.resolve(flags.eta, "eta", defaults.eta)?,
        tau: file.resolve(flags.tau, "tau", defaults.tau)?,
        lambda: file.resolve(flags.lambda, "lambda", defaults.lambda)?,
        similarity_threshold: file.resolve(flags.t, "t", defaults.similarity_threshold)?,
        noise_scale: file.resolve(flags.mu, "mu", defaults.noise_scale)?,
        inverter_hidden: file.resolve(
            flags.inverter_hidden,
            "inverter-hidden",
            defaults.inverter_hidden,
        )?,
        inverter_depth: file.resolve(
            flags.inverter_depth,
            "inverter-depth",
            defaults.inverter_depth,
        )?,
        inverter_epochs: file.resolve(
            flags.inverter_epochs,
            "inverter-epochs",
            defaults.inverter_epochs,
        )?,
        inverter_learning_rate: file.resolve(
            flags.inverter_lr,
            "inverter-lr",
            defaults.inverter_learning_rate,
        )?,
        seed,
        scale_match: file.resolve_switch(flags.scale_match, "scale-match")?,
        disable_recognizer: false,
        disable_inverter: false,
        disable_cosine_loss: false,
    };
    for ablation in &flags.ablation {
        match ablation {
            AblationFlag::Hr => config.disable_recognizer = true,
            AblationFlag::Fi => config.disable_inverter = true,
            AblationFlag::Cdl => config.disable_cosine_loss = true,
        }
    }
    config.validate().map_err(attack_error)?;
    Ok(config)
}

fn resolve_train_config(
    flags: &TrainFlags,
    file: &ConfigFile,
    seed: u64,
) -> Result<TrainConfig, CliError> {
    let defaults = TrainConfig::default();
    let config = TrainConfig {
        hidden: file.resolve(flags.hidden, "hidden", defaults.hidden)?,
        epochs: file.resolve(flags.epochs, "epochs", defaults.epochs)?,
        learning_rate: file.resolve(flags.lr, "lr", defaults.learning_rate)?,
        weight_decay: file.resolve(flags.weight_decay, "weight-decay", defaults.weight_decay)?,
        seed,
    };
    config.validate().map_err(model_error)?;
    Ok(config)
}

fn load_dataset(base: &Path) -> Result<(Hypergraph, DatasetPaths), CliError> {
    let paths = DatasetPaths::from_base(base);
    let graph = parse_dataset(&paths).map_err(data_error)?;
    Ok((graph, paths))
}

pub fn gen_synth(args: GenSynthArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let defaults = SyntheticSpec::default();
    let spec = SyntheticSpec {
        num_nodes: file.resolve(args.nodes, "nodes", defaults.num_nodes)?,
        num_classes: file.resolve(args.classes, "classes", defaults.num_classes)?,
        num_hyperedges: file.resolve(args.edges, "edges", defaults.num_hyperedges)?,
        intra_class_probability: file.resolve(
            args.p_in,
            "p-in",
            defaults.intra_class_probability,
        )?,
        size_min: file.resolve(args.size_min, "size-min", defaults.size_min)?,
        size_max: file.resolve(args.size_max, "size-max", defaults.size_max)?,
        feature_dim: file.resolve(args.feat_dim, "feat-dim", defaults.feature_dim)?,
        signal_strength: file.resolve(args.signal, "signal", defaults.signal_strength)?,
        flip_probability: file.resolve(args.flip, "flip", defaults.flip_probability)?,
        allow_singletons: file.resolve_switch(args.allow_singletons, "allow-singletons")?,
        seed: args.seed,
    };
    let graph = generate(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
    let base = out_path(args.out);
    let paths = DatasetPaths::from_base(&base);
    write_dataset(&graph, &paths).map_err(data_error)?;
    println!(
        "wrote {} ({} nodes, {} hyperedges, {} classes)",
        base.display(),
        graph.num_nodes(),
        graph.num_hyperedges(),
        graph.num_classes
    );
    println!(
        "effective spec: {}",
        serde_json::to_string(&spec).map_err(data_error)?
    );
    Ok(())
}

/// Attack report as written to disk: the pipeline's report plus the
/// effective configuration that produced it.
#[derive(Serialize)]
struct AttackReportFile<'a> {
    #[serde(flatten)]
    report: &'a hginject_core::attack::AttackReport,
    effective_config: &'a AttackConfig,
}

/// Report written for `--baseline random`.
#[derive(Debug, Serialize, Deserialize)]
struct BaselineReport {
    baseline: String,
    seed: u64,
    eta: f64,
    injected: usize,
    injected_hyperedges: Vec<usize>,
}

fn report_path(base: &Path) -> PathBuf {
    let mut os = base.as_os_str().to_os_string();
    os.push(".attack.json");
    PathBuf::from(os)
}

pub fn attack(args: AttackArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let (graph, _) = load_dataset(&args.data)?;
    let out_base = out_path(args.out);
    let out_paths = DatasetPaths::from_base(&out_base);
    let started = Instant::now();

    match args.baseline {
        Some(BaselineKind::Random) => {
            // The baseline has no eta cap: it may exhaust every hyperedge.
            let eta = file.resolve(args.attack.eta, "eta", AttackConfig::default().eta)?;
            let attacked = random_injection(&graph, eta, args.seed).map_err(attack_error)?;
            write_dataset(&attacked.graph, &out_paths).map_err(data_error)?;
            let report = BaselineReport {
                baseline: "random".into(),
                seed: args.seed,
                eta,
                injected: attacked.injected_count,
                injected_hyperedges: attacked.origin_map.values().copied().collect(),
            };
            write_json(&report, &report_path(&out_base)).map_err(data_error)?;
            println!(
                "random baseline: injected {} nodes -> {}",
                attacked.injected_count,
                out_base.display()
            );
        }
        None => {
            let config = resolve_attack_config(&args.attack, &file, args.seed)?;
            let (attacked, mut report) =
                pivotal_injection(&graph, &config).map_err(attack_error)?;
            if !args.timings {
                report.wall_time_ms = None;
            }
            write_dataset(&attacked.graph, &out_paths).map_err(data_error)?;
            let file = AttackReportFile {
                report: &report,
                effective_config: &config,
            };
            write_json(&file, &report_path(&out_base)).map_err(data_error)?;
            if report.clipped {
                eprintln!(
                    "warning: only {} candidate hyperedges available for budget {}",
                    report.injected_hyperedges.len(),
                    report.budget
                );
            }
            println!(
                "pivotal attack: injected {} of budget {} ({} candidates at tau={}), \
                 final mean cosine {:.4} -> {}",
                attacked.injected_count,
                report.budget,
                report.candidate_count,
                report.tau,
                report.final_mean_cosine,
                out_base.display()
            );
            println!(
                "effective config: {}",
                serde_json::to_string(&config).map_err(data_error)?
            );
        }
    }
    eprintln!("attack stage took {:.1} ms", started.elapsed().as_secs_f64() * 1e3);
    Ok(())
}

pub fn pipeline(args: PipelineArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    if args.seeds.is_empty() {
        return Err(CliError::Usage("seed list must be non-empty".into()));
    }
    let (graph, _) = load_dataset(&args.data)?;
    let attack_config = resolve_attack_config(&args.attack, &file, args.seeds[0])?;
    let train_config = resolve_train_config(&args.train, &file, args.seeds[0])?;
    let dataset_name = args.data.display().to_string();

    let (mut report, timings) = run_experiment(
        &graph,
        &dataset_name,
        &attack_config,
        &train_config,
        &args.seeds,
    )
    .map_err(experiment_error)?;
    if args.timings {
        report.timings_ms = Some(timings.clone());
    }
    let out = out_path(args.out);
    write_report(&report, &out).map_err(data_error)?;

    for model in &report.models {
        println!(
            "{:>16}: clean {:.4}  attacked {:.4}  random {:.4}  drop {:+.4}  gap-vs-random {:+.4}",
            model.model,
            model.clean.accuracy.mean,
            model.pivotal.accuracy.mean,
            model.random.accuracy.mean,
            model.deltas.accuracy_drop,
            model.deltas.accuracy_gap_vs_random,
        );
    }
    println!(
        "bound checks: upper {}, single-path {}, shrinkage {}",
        report.bound_checks.upper_bound_ok,
        report.bound_checks.single_path_exactness_ok,
        report.bound_checks.spectral_shrinkage_ok
    );
    println!("report -> {}", out.display());
    for (stage, ms) in &timings {
        eprintln!("stage {stage}: {ms:.1} ms");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct TrialMargins {
    trial: usize,
    nodes: usize,
    worst_upper_slack: f64,
    single_path_nodes: usize,
    max_single_path_deviation: f64,
    multi_edge_counterexamples: usize,
}

#[derive(Debug, Serialize)]
struct BoundRunReport {
    trials: usize,
    tau: usize,
    upper_bound_ok: bool,
    single_path_exactness_ok: bool,
    spectral_shrinkage_ok: bool,
    worst_upper_slack: f64,
    max_single_path_deviation: f64,
    multi_edge_counterexamples: usize,
    /// One margin record per trial.
    records: Vec<TrialMargins>,
}

struct Verdict {
    ok: bool,
    worst_slack: f64,
    single_path_nodes: usize,
    max_dev: f64,
    flagged: usize,
    nodes: usize,
}

fn scenario_verdict(scenario: &PerturbationScenario, tau: usize) -> Verdict {
    let upper = check_upper_bound(scenario);
    let single = check_single_path_amplification(scenario, tau);
    let worst_slack = upper
        .margins
        .iter()
        .map(|m| m.slack)
        .fold(f64::INFINITY, f64::min);
    let max_dev = single
        .single_path
        .iter()
        .map(|m| m.slack.abs())
        .fold(0.0, f64::max);
    Verdict {
        ok: upper.holds() && single.exactness_holds(),
        worst_slack,
        single_path_nodes: single.single_path.len(),
        max_dev,
        flagged: single.counterexamples.len(),
        nodes: scenario.incidence.num_nodes(),
    }
}

pub fn check_bounds(args: CheckBoundsArgs) -> Result<(), CliError> {
    if let Some(replay) = &args.replay {
        let text = std::fs::read_to_string(replay).map_err(data_error)?;
        let scenario: PerturbationScenario =
            serde_json::from_str(&text).map_err(data_error)?;
        let verdict = scenario_verdict(&scenario, args.tau);
        println!(
            "replay: hard assertions {}, worst upper slack {:.3e}, \
             max single-path deviation {:.3e}, {} multi-edge flags",
            if verdict.ok { "hold" } else { "VIOLATED" },
            verdict.worst_slack,
            verdict.max_dev,
            verdict.flagged
        );
        if !verdict.ok {
            return Err(CliError::Assertion(format!(
                "replayed scenario {} violates the hard assertions",
                replay.display()
            )));
        }
        return Ok(());
    }

    if args.trials < 1 {
        return Err(CliError::Usage("trials must be >= 1".into()));
    }
    let dataset_graph = match (&args.source.data, &args.source.random) {
        (Some(base), None) => Some(load_dataset(base)?.0),
        (None, Some(dims)) if dims.len() == 2 => None,
        (None, None) => {
            return Err(CliError::Usage(
                "provide a scenario source: --data BASE or --random N M".into(),
            ))
        }
        _ => return Err(CliError::Usage("--random takes exactly N and M".into())),
    };
    let (max_nodes, max_edges) = match &args.source.random {
        Some(dims) => (dims[0].max(2), dims[1].max(1)),
        None => (0, 0),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut worst_upper_slack = f64::INFINITY;
    let mut max_single_dev: f64 = 0.0;
    let mut flagged_total = 0usize;
    let mut records = Vec::with_capacity(args.trials);

    for trial in 0..args.trials {
        let scenario = match &dataset_graph {
            Some(graph) => {
                let m = graph.num_hyperedges();
                let width = 8;
                let weights: Vec<f64> = (0..m).map(|_| rng.gen_range(0.5..2.0)).collect();
                let delta = DenseMatrix::new(
                    m,
                    width,
                    (0..m * width)
                        .map(|_| rng.gen_range(-1.0..1.0))
                        .collect(),
                )
                .map_err(data_error)?;
                PerturbationScenario::new(graph.incidence.clone(), weights, delta)
                    .map_err(data_error)?
            }
            None => PerturbationScenario::random(max_nodes, max_edges, 8, &mut rng),
        };
        let verdict = scenario_verdict(&scenario, args.tau);
        worst_upper_slack = worst_upper_slack.min(verdict.worst_slack);
        max_single_dev = max_single_dev.max(verdict.max_dev);
        flagged_total += verdict.flagged;
        records.push(TrialMargins {
            trial,
            nodes: verdict.nodes,
            worst_upper_slack: verdict.worst_slack,
            single_path_nodes: verdict.single_path_nodes,
            max_single_path_deviation: verdict.max_dev,
            multi_edge_counterexamples: verdict.flagged,
        });
        if !verdict.ok {
            let dump = out_path(PathBuf::from(format!("bounds-violation-{trial}.json")));
            write_json(&scenario, &dump).map_err(data_error)?;
            return Err(CliError::Assertion(format!(
                "trial {trial} violated the hard assertions; scenario saved to {} for replay",
                dump.display()
            )));
        }

        // Spectral shrinkage on a random injection into the same structure.
        let incidence = scenario.incidence.clone();
        let n = incidence.num_nodes();
        let graph = Hypergraph {
            features: DenseMatrix::zeros(n, 1),
            labels: vec![None; n],
            num_classes: 0,
            masks: hginject_core::hypergraph::Masks::empty(n),
            incidence,
        };
        let m = graph.num_hyperedges();
        let count = rng.gen_range(0..=m.min(3));
        let mut targets: Vec<usize> = (0..m).collect();
        for i in 0..count {
            let j = rng.gen_range(i..m);
            targets.swap(i, j);
        }
        let plan = InjectionPlan {
            entries: targets[..count].iter().map(|&j| (j, vec![0.0])).collect(),
            budget: count,
            selection_seed: args.seed,
        };
        let attacked = inject_nodes(&graph, &plan).map_err(data_error)?;
        let shrink = check_spectral_shrinkage(&graph, &attacked).map_err(data_error)?;
        if !shrink.holds {
            return Err(CliError::Assertion(format!(
                "trial {trial}: spectral shrinkage violated \
                 (clean {:.6}, attacked {:.6})",
                shrink.clean_radius, shrink.attacked_radius
            )));
        }
    }

    // Reaching this point means no trial tripped a hard assertion.
    let report = BoundRunReport {
        trials: args.trials,
        tau: args.tau,
        upper_bound_ok: true,
        single_path_exactness_ok: true,
        spectral_shrinkage_ok: true,
        worst_upper_slack,
        max_single_path_deviation: max_single_dev,
        multi_edge_counterexamples: flagged_total,
        records,
    };
    if let Some(out) = args.out {
        write_json(&report, &out_path(out)).map_err(data_error)?;
    }
    println!(
        "{} trials: upper bound ok, single-path exact (max deviation {:.3e}), \
         shrinkage ok; worst upper slack {:.3e}; {} multi-edge flags (informational)",
        args.trials, max_single_dev, worst_upper_slack, flagged_total
    );
    Ok(())
}

pub fn train(args: TrainArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(args.config.as_deref())?;
    let (graph, _) = load_dataset(&args.data)?;
    let config = resolve_train_config(&args.train, &file, args.seed)?;
    let kind = match args.model {
        ModelChoice::Spectral => ModelKind::Spectral,
        ModelChoice::Mean => ModelKind::MeanAggregation,
    };
    let outcome = models::train(&graph, kind, &config).map_err(model_error)?;
    let out = out_path(args.out);
    write_json(&outcome.params, &out).map_err(data_error)?;
    let last = outcome.trace.last().expect("at least one epoch");
    println!(
        "trained {} for {} epochs: final loss {:.6}, train accuracy {:.4}{}",
        kind.as_str(),
        outcome.trace.len(),
        last.loss,
        last.train_accuracy,
        match last.val_accuracy {
            Some(acc) => format!(", val accuracy {acc:.4}"),
            None => String::new(),
        }
    );
    println!("params -> {}", out.display());
    Ok(())
}

pub fn evaluate(args: EvaluateArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.params).map_err(data_error)?;
    let params: HgnnParams = serde_json::from_str(&text).map_err(data_error)?;
    let (graph, _) = load_dataset(&args.data)?;
    let mask = match args.mask {
        MaskChoice::Train => &graph.masks.train,
        MaskChoice::Val => &graph.masks.val,
        MaskChoice::Test => &graph.masks.test,
    };
    let metrics = models::evaluate(&params, &graph, mask).map_err(model_error)?;
    let rendered = serde_json::to_string_pretty(&metrics).map_err(data_error)?;
    match args.out {
        Some(out) => {
            let out = out_path(out);
            std::fs::write(&out, format!("{rendered}\n")).map_err(data_error)?;
            println!("metrics -> {}", out.display());
        }
        None => println!("{rendered}"),
    }
    Ok(())
}

