//! Command-line harness wiring dataset generation, attacks, victim training,
//! poisoning pipelines, and bound checks into reproducible experiments.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 data error, 3 assertion or
//! bound failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "hginject",
    version,
    about = "Hypergraph node-injection attacks and victim-model experiments",
    after_help = "Set HGINJECT_OUT_DIR to prefix relative output paths.\n\
                  Config precedence: flags > --config file (key=value) > defaults."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded planted-partition hypergraph dataset.
    GenSynth(GenSynthArgs),
    /// Attack a dataset and write the attacked dataset plus a report.
    Attack(AttackArgs),
    /// Full poisoning experiment: clean, attacked, and random-baseline
    /// training of both victim models over a seed list.
    Pipeline(PipelineArgs),
    /// Verify the perturbation bounds and spectral shrinkage numerically.
    CheckBounds(CheckBoundsArgs),
    /// Train one victim model on a dataset and save its parameters.
    Train(TrainArgs),
    /// Evaluate saved parameters on a dataset split.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    /// Output dataset base path (files get .hgr/.features.csv/... suffixes).
    #[arg(long, default_value = "synth")]
    out: PathBuf,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    edges: Option<usize>,
    /// Probability a hyperedge is drawn from a single class.
    #[arg(long = "p-in")]
    p_in: Option<f64>,
    #[arg(long)]
    size_min: Option<usize>,
    #[arg(long)]
    size_max: Option<usize>,
    #[arg(long)]
    feat_dim: Option<usize>,
    /// Probability of a 1 inside a node's class block.
    #[arg(long)]
    signal: Option<f64>,
    /// Probability of a 1 outside the class block.
    #[arg(long)]
    flip: Option<f64>,
    #[arg(long)]
    allow_singletons: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Key=value config file applied below the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AblationFlag {
    /// Without the hyperedge recognizer: candidates are all hyperedges.
    Hr,
    /// Without the feature inverter: inject softmax of the initializer.
    Fi,
    /// Without the cosine-distance loss: untrained inverter MLP.
    Cdl,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum BaselineKind {
    Random,
}

#[derive(Args)]
struct AttackFlags {
    /// Perturbation rate; budget = floor(eta * N).
    #[arg(long)]
    eta: Option<f64>,
    /// Pivotality level on node hyperdegrees.
    #[arg(long)]
    tau: Option<usize>,
    /// Weight of the hinge regularizer in the inversion loss.
    #[arg(long)]
    lambda: Option<f64>,
    /// Similarity threshold of the hinge regularizer.
    #[arg(long = "t")]
    t: Option<f64>,
    /// Gaussian noise scale of the feature initializer.
    #[arg(long = "mu")]
    mu: Option<f64>,
    #[arg(long)]
    inverter_hidden: Option<usize>,
    #[arg(long)]
    inverter_depth: Option<usize>,
    #[arg(long)]
    inverter_epochs: Option<usize>,
    #[arg(long)]
    inverter_lr: Option<f64>,
    /// Rescale generated features to the mean node-feature norm.
    #[arg(long)]
    scale_match: bool,
    /// Remove pipeline stages: hr, fi, cdl (comma separated or repeated).
    #[arg(long, value_delimiter = ',')]
    ablation: Vec<AblationFlag>,
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
}

#[derive(Args)]
struct AttackArgs {
    /// Input dataset base path.
    #[arg(long)]
    data: PathBuf,
    /// Output base path for the attacked dataset; the report lands at
    /// `<out>.attack.json`.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    attack: AttackFlags,
    /// Run a baseline instead of the pivotal attack.
    #[arg(long)]
    baseline: Option<BaselineKind>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Embed measured wall times in the report (breaks byte
    /// reproducibility).
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    data: PathBuf,
    /// Report output path.
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    /// Comma-separated seed list; one full experiment cell per seed.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    #[command(flatten)]
    attack: AttackFlags,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    timings: bool,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = false, multiple = false)]
struct CheckBoundsSource {
    /// Use this dataset's incidence structure for the scenarios.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Random incidence structures: max nodes and max hyperedges.
    #[arg(long, num_args = 2, value_names = ["N", "M"])]
    random: Option<Vec<usize>>,
}

#[derive(Args)]
struct CheckBoundsArgs {
    #[command(flatten)]
    source: CheckBoundsSource,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 2)]
    tau: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the margin summary here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Re-check one serialized scenario instead of sampling new ones.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = ModelChoice::Spectral)]
    model: ModelChoice,
    #[arg(long, default_value = "params.json")]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    train: TrainFlags,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelChoice {
    Spectral,
    Mean,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MaskChoice {
    Train,
    Val,
    Test,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value_t = MaskChoice::Test)]
    mask: MaskChoice,
    /// Write metrics here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Error with the exit code it maps to.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Assertion(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Assertion(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Assertion(m) => m,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenSynth(args) => commands::gen_synth(args),
        Command::Attack(args) => commands::attack(args),
        Command::Pipeline(args) => commands::pipeline(args),
        Command::CheckBounds(args) => commands::check_bounds(args),
        Command::Train(args) => commands::train(args),
        Command::Evaluate(args) => commands::evaluate(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}
