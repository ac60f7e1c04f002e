//! End-to-end tests of the binary: exit codes, file outputs, determinism.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn hginject(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hginject"))
        .current_dir(dir)
        .env_remove("HGINJECT_OUT_DIR")
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn gen_tiny(dir: &Path, name: &str, seed: u64) {
    let output = hginject(
        dir,
        &[
            "gen-synth",
            "--out",
            name,
            "--nodes",
            "60",
            "--edges",
            "30",
            "--seed",
            &seed.to_string(),
        ],
    );
    assert_exit(&output, 0);
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn gen_synth_is_seed_deterministic() {
    let dir = TempDir::new().unwrap();
    gen_tiny(dir.path(), "a", 7);
    gen_tiny(dir.path(), "b", 7);
    for suffix in [".hgr", ".features.csv", ".labels.txt", ".split.txt"] {
        assert_eq!(
            read(dir.path(), &format!("a{suffix}")),
            read(dir.path(), &format!("b{suffix}")),
            "{suffix} differs"
        );
    }
}

#[test]
fn gen_synth_defaults_produce_the_standard_dataset() {
    let dir = TempDir::new().unwrap();
    let output = hginject(dir.path(), &["gen-synth", "--out", "synth"]);
    assert_exit(&output, 0);
    let header = String::from_utf8(read(dir.path(), "synth.hgr"))
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    assert_eq!(header, "200 400", "M N header of the default dataset");
    let labels = String::from_utf8(read(dir.path(), "synth.labels.txt")).unwrap();
    let max_class = labels
        .lines()
        .map(|l| l.trim().parse::<i64>().unwrap())
        .max()
        .unwrap();
    assert_eq!(max_class, 3, "four classes");
}

#[test]
fn gen_synth_rejects_invalid_spec() {
    let dir = TempDir::new().unwrap();
    let output = hginject(dir.path(), &["gen-synth", "--out", "x", "--p-in", "1.5"]);
    assert_exit(&output, 1);
}

#[test]
fn attack_writes_dataset_and_report() {
    let dir = TempDir::new().unwrap();
    gen_tiny(dir.path(), "data", 3);
    let output = hginject(
        dir.path(),
        &[
            "attack",
            "--data",
            "data",
            "--out",
            "atk",
            "--eta",
            "0.05",
            "--tau",
            "2",
            "--lambda",
            "0.1",
            "--t",
            "0.9",
            "--inverter-epochs",
            "10",
            "--seed",
            "5",
        ],
    );
    assert_exit(&output, 0);
    assert!(dir.path().join("atk.hgr").exists());
    let report: serde_json::Value =
        serde_json::from_slice(&read(dir.path(), "atk.attack.json")).unwrap();
    assert_eq!(report["budget"], 3); // floor(0.05 * 60)
    assert_eq!(report["tau"], 2);
    assert!(report.get("wall_time_ms").is_none(), "timings stripped by default");

    // Same seed twice: byte-identical outputs.
    let rerun = hginject(
        dir.path(),
        &[
            "attack", "--data", "data", "--out", "atk2", "--inverter-epochs", "10", "--seed", "5",
        ],
    );
    assert_exit(&rerun, 0);
    assert_eq!(read(dir.path(), "atk.hgr"), read(dir.path(), "atk2.hgr"));
    assert_eq!(
        read(dir.path(), "atk.features.csv"),
        read(dir.path(), "atk2.features.csv")
    );
}

#[test]
fn attack_rejects_zero_eta() {
    let dir = TempDir::new().unwrap();
    gen_tiny(dir.path(), "data", 3);
    let output = hginject(
        dir.path(),
        &["attack", "--data", "data", "--out", "x", "--eta", "0"],
    );
    assert_exit(&output, 1);
}

#[test]
fn attack_missing_dataset_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let output = hginject(dir.path(), &["attack", "--data", "absent", "--out", "x"]);
    assert_exit(&output, 2);
}

#[test]
fn attack_random_baseline_keeps_budget() {
    let dir = TempDir::new().unwrap();
    gen_tiny(dir.path(), "data", 3);
    let output = hginject(
        dir.path(),
        &[
            "attack", "--data", "data", "--out", "rnd", "--baseline", "random", "--seed", "5",
        ],
    );
    assert_exit(&output, 0);
    let report: serde_json::Value =
        serde_json::from_slice(&read(dir.path(), "rnd.attack.json")).unwrap();
    assert_eq!(report["baseline"], "random");
    assert_eq!(report["injected"], 3);
}

#[test]
fn attack_supports_ablation_flags() {
    let dir = TempDir::new().unwrap();
    gen_tiny(dir.path(), "data", 3);
    let output = hginject(
        dir.path(),
        &[
            "attack", "--data", "data", "--out", "abl", "--ablation", "hr,fi", "--seed", "1",
        ],
    );
    assert_exit(&output, 0);
    let report: serde_json::Value =
        serde_json::from_slice(&read(dir.path(), "abl.attack.json")).unwrap();
    // Recognizer disabled: every hyperedge is a candidate.
    assert_eq!(report["candidate_count"], 30);
    // Inverter disabled: no training trace.
    assert_eq!(report["loss_trace"].as_array().unwrap().len(), 0);
}

#[test]
fn pipeline_report_is_byte_deterministic_and_complete() {
    let dir = TempDir::new().unwrap();
    gen_tiny(dir.path(), "data", 11);
    let args = [
        "pipeline",
        "--data",
        "data",
        "--seeds",
        "1,2",
        "--epochs",
        "20",
        "--hidden",
        "8",
        "--inverter-epochs",
        "10",
    ];
    let mut first = args.to_vec();
    first.extend(["--out", "rep1.json"]);
    assert_exit(&hginject(dir.path(), &first), 0);
    let mut second = args.to_vec();
    second.extend(["--out", "rep2.json"]);
    assert_exit(&hginject(dir.path(), &second), 0);
    assert_eq!(read(dir.path(), "rep1.json"), read(dir.path(), "rep2.json"));

    let report: serde_json::Value =
        serde_json::from_slice(&read(dir.path(), "rep1.json")).unwrap();
    // The clean run is always present, next to the attacked metrics.
    let models = report["models"].as_array().unwrap();
    assert_eq!(models.len(), 2);
    for model in models {
        assert!(model["clean"]["accuracy"]["mean"].is_number());
        assert!(model["pivotal"]["accuracy"]["mean"].is_number());
        assert!(model["random"]["accuracy"]["mean"].is_number());
        assert_eq!(model["clean"]["accuracy"]["per_seed"].as_array().unwrap().len(), 2);
    }
    assert_eq!(report["seeds"].as_array().unwrap().len(), 2);
}

#[test]
fn pipeline_timings_flag_embeds_stage_durations() {
    let dir = TempDir::new().unwrap();
    gen_tiny(dir.path(), "data", 11);
    let output = hginject(
        dir.path(),
        &[
            "pipeline", "--data", "data", "--seeds", "1", "--epochs", "10", "--hidden", "8",
            "--inverter-epochs", "5", "--out", "rep.json", "--timings",
        ],
    );
    assert_exit(&output, 0);
    let report: serde_json::Value =
        serde_json::from_slice(&read(dir.path(), "rep.json")).unwrap();
    let timings = report["timings_ms"].as_object().expect("timings embedded");
    for stage in ["attack", "train_eval", "bound_checks"] {
        assert!(timings[stage].as_f64().unwrap() >= 0.0);
    }
}

#[test]
fn pipeline_without_split_fails_with_data_error() {
    let dir = TempDir::new().unwrap();
    gen_tiny(dir.path(), "data", 3);
    fs::remove_file(dir.path().join("data.split.txt")).unwrap();
    let output = hginject(
        dir.path(),
        &["pipeline", "--data", "data", "--out", "rep.json", "--epochs", "5"],
    );
    assert_exit(&output, 2);
}

#[test]
fn check_bounds_random_mode_passes() {
    let dir = TempDir::new().unwrap();
    let output = hginject(
        dir.path(),
        &[
            "check-bounds", "--random", "30", "20", "--trials", "100", "--out", "bounds.json",
        ],
    );
    assert_exit(&output, 0);
    let report: serde_json::Value =
        serde_json::from_slice(&read(dir.path(), "bounds.json")).unwrap();
    assert_eq!(report["trials"], 100);
    assert_eq!(report["upper_bound_ok"], true);
}

#[test]
fn check_bounds_rejects_zero_trials_and_missing_source() {
    let dir = TempDir::new().unwrap();
    let output = hginject(
        dir.path(),
        &["check-bounds", "--random", "10", "5", "--trials", "0"],
    );
    assert_exit(&output, 1);
    let output = hginject(dir.path(), &["check-bounds", "--trials", "5"]);
    assert_exit(&output, 1);
}

#[test]
fn check_bounds_replays_serialized_scenarios() {
    let dir = TempDir::new().unwrap();
    // A hand-written scenario with one node in one hyperedge.
    let scenario = serde_json::json!({
        "incidence": {
            "num_nodes": 2,
            "edges": [[0, 1]],
            "node_edges": [[0], [0]],
        },
        "weights": [1.0],
        // Both nodes have weighted degree 1, so delta_x = delta_z exactly.
        "delta_z": {"rows": 1, "cols": 2, "values": [3.0, 4.0]},
        "delta_x": {"rows": 2, "cols": 2, "values": [3.0, 4.0, 3.0, 4.0]},
    });
    fs::write(
        dir.path().join("scenario.json"),
        serde_json::to_string(&scenario).unwrap(),
    )
    .unwrap();
    let run = |dir: &Path| {
        let output = hginject(dir, &["check-bounds", "--replay", "scenario.json"]);
        (
            output.status.code(),
            String::from_utf8_lossy(&output.stdout).to_string(),
        )
    };
    let first = run(dir.path());
    let second = run(dir.path());
    assert_eq!(first.0, Some(0));
    assert_eq!(first, second, "replay verdict must be stable");
}

#[test]
fn check_bounds_replay_violation_exits_three() {
    let dir = TempDir::new().unwrap();
    // delta_x inconsistent with delta_z: the single-path identity cannot
    // hold, which is a hard assertion failure.
    let scenario = serde_json::json!({
        "incidence": {
            "num_nodes": 2,
            "edges": [[0, 1]],
            "node_edges": [[0], [0]],
        },
        "weights": [1.0],
        "delta_z": {"rows": 1, "cols": 2, "values": [3.0, 4.0]},
        "delta_x": {"rows": 2, "cols": 2, "values": [1.0, 1.0, 1.0, 1.0]},
    });
    fs::write(
        dir.path().join("broken.json"),
        serde_json::to_string(&scenario).unwrap(),
    )
    .unwrap();
    let output = hginject(dir.path(), &["check-bounds", "--replay", "broken.json"]);
    assert_exit(&output, 3);
}

#[test]
fn train_then_evaluate_round_trip() {
    let dir = TempDir::new().unwrap();
    gen_tiny(dir.path(), "data", 3);
    let output = hginject(
        dir.path(),
        &[
            "train", "--data", "data", "--model", "spectral", "--epochs", "40", "--hidden",
            "16", "--out", "params.json", "--seed", "1",
        ],
    );
    assert_exit(&output, 0);
    let output = hginject(
        dir.path(),
        &[
            "evaluate", "--params", "params.json", "--data", "data", "--mask", "test",
        ],
    );
    assert_exit(&output, 0);
    let metrics: serde_json::Value =
        serde_json::from_slice(&output.stdout).expect("metrics JSON on stdout");
    let accuracy = metrics["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&accuracy));
}

#[test]
fn out_dir_env_var_prefixes_relative_outputs() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("outputs");
    let output = Command::new(env!("CARGO_BIN_EXE_hginject"))
        .current_dir(dir.path())
        .env("HGINJECT_OUT_DIR", &out_dir)
        .args(["gen-synth", "--out", "synth", "--nodes", "40", "--edges", "20"])
        .output()
        .unwrap();
    assert_exit(&output, 0);
    assert!(out_dir.join("synth.hgr").exists());
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let dir = TempDir::new().unwrap();
    gen_tiny(dir.path(), "data", 3);
    fs::write(dir.path().join("run.cfg"), "eta = 0.04\ntau = 3\n").unwrap();
    let output = hginject(
        dir.path(),
        &[
            "attack", "--data", "data", "--out", "atk", "--config", "run.cfg", "--tau", "1",
            "--inverter-epochs", "5",
        ],
    );
    assert_exit(&output, 0);
    let report: serde_json::Value =
        serde_json::from_slice(&read(dir.path(), "atk.attack.json")).unwrap();
    // Flag wins over file; file wins over the 0.05 default.
    assert_eq!(report["tau"], 1);
    assert_eq!(report["budget"], 2); // floor(0.04 * 60)
}

#[test]
fn usage_help_exits_zero_and_unknown_flag_exits_one() {
    let dir = TempDir::new().unwrap();
    assert_exit(&hginject(dir.path(), &["--help"]), 0);
    assert_exit(&hginject(dir.path(), &["gen-synth", "--nonsense"]), 1);
}
