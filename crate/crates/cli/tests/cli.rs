//! End-to-end tests of the `teamnet` binary: exit codes, file outputs, and
//! the equivalence between loaded and freshly synthesised weights.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn teamnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teamnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

const TREE_CONFIG: &str = "\
horizon = 4
trials = 5
master_seed = 11

[topology]
kind = \"line\"
agents = 4

[model]
state_dim = 2
measurement_dim = 1
noise_scale = 1.0

[[algorithms]]
name = \"odol\"

[[algorithms]]
name = \"oedol\"

[[algorithms]]
name = \"sdol\"
window = 3

[[algorithms]]
name = \"drls\"
";

const CYCLE_CONFIG: &str = "\
horizon = 4
trials = 3
master_seed = 11

[topology]
kind = \"cycle\"
agents = 4

[model]
state_dim = 1
measurement_dim = 1
noise_scale = 1.0

[[algorithms]]
name = \"odol\"
";

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn missing_config_file_is_a_usage_error() {
    let out = teamnet(&["simulate", "--config", "/definitely/not/here.toml"]);
    assert_eq!(exit_code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("cannot read"), "{}", stderr(&out));
}

#[test]
fn conflicting_sources_are_a_usage_error() {
    let out = teamnet(&["simulate", "--config", "x.toml", "--preset", "fig6"]);
    assert_eq!(exit_code(&out), 2, "{}", stderr(&out));
}

#[test]
fn a_source_is_required() {
    let out = teamnet(&["simulate"]);
    assert_eq!(exit_code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("--config"), "{}", stderr(&out));
}

#[test]
fn unknown_preset_is_a_usage_error() {
    let out = teamnet(&["simulate", "--preset", "fig13"]);
    assert_eq!(exit_code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("fig12"), "{}", stderr(&out));
}

#[test]
fn reports_exist_and_repeat_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "tree.toml", TREE_CONFIG);
    let out_a = dir.path().join("a");
    let run = teamnet(&["simulate", "--config", &config, "--out", out_a.to_str().unwrap()]);
    assert_eq!(exit_code(&run), 0, "{}", stderr(&run));

    let csv = fs::read_to_string(out_a.join("tree.csv")).unwrap();
    assert!(csv.starts_with("metric,algorithm,topology,T,value,stderr"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_a.join("tree.json")).unwrap()).unwrap();
    let first_round_cost = json["runs"][0]["cumulative"][0]["mean"].as_f64().unwrap();
    assert!(first_round_cost > 0.0);
    assert!(out_a.join("tree_comparison.json").exists());

    // Same configuration, separate output directory: identical bytes.
    let out_b = dir.path().join("b");
    let rerun = teamnet(&["simulate", "--config", &config, "--out", out_b.to_str().unwrap()]);
    assert_eq!(exit_code(&rerun), 0, "{}", stderr(&rerun));
    assert_eq!(
        fs::read(out_a.join("tree.csv")).unwrap(),
        fs::read(out_b.join("tree.csv")).unwrap()
    );
    assert_eq!(
        fs::read(out_a.join("tree.json")).unwrap(),
        fs::read(out_b.join("tree.json")).unwrap()
    );
}

#[test]
fn thread_count_does_not_change_the_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "tree.toml", TREE_CONFIG);
    let out_one = dir.path().join("one");
    let out_four = dir.path().join("four");
    let run_one = teamnet(&[
        "simulate", "--config", &config,
        "--threads", "1",
        "--out", out_one.to_str().unwrap(),
    ]);
    let run_four = teamnet(&[
        "simulate", "--config", &config,
        "--threads", "4",
        "--out", out_four.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&run_one), 0, "{}", stderr(&run_one));
    assert_eq!(exit_code(&run_four), 0, "{}", stderr(&run_four));
    assert_eq!(
        fs::read(out_one.join("tree.csv")).unwrap(),
        fs::read(out_four.join("tree.csv")).unwrap()
    );
    assert_eq!(
        fs::read(out_one.join("tree.json")).unwrap(),
        fs::read(out_four.join("tree.json")).unwrap()
    );
}

#[test]
fn precomputed_weights_reproduce_in_memory_synthesis() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "tree.toml", TREE_CONFIG);
    let weights_dir = dir.path().join("weights");
    let synth = teamnet(&[
        "weights", "--config", &config,
        "--out", weights_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&synth), 0, "{}", stderr(&synth));
    for file in [
        "odol_line.weights.json",
        "oedol_line.weights.json",
        "sdol3_line.weights.json",
    ] {
        assert!(weights_dir.join(file).exists(), "missing {file}");
    }
    assert!(stdout(&synth).contains("no precomputed weights"));

    let fresh = dir.path().join("fresh");
    let loaded = dir.path().join("loaded");
    let run_fresh = teamnet(&["simulate", "--config", &config, "--out", fresh.to_str().unwrap()]);
    let run_loaded = teamnet(&[
        "simulate", "--config", &config,
        "--weights", weights_dir.to_str().unwrap(),
        "--out", loaded.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&run_fresh), 0, "{}", stderr(&run_fresh));
    assert_eq!(exit_code(&run_loaded), 0, "{}", stderr(&run_loaded));
    assert_eq!(
        fs::read(fresh.join("tree.csv")).unwrap(),
        fs::read(loaded.join("tree.csv")).unwrap()
    );
    assert_eq!(
        fs::read(fresh.join("tree.json")).unwrap(),
        fs::read(loaded.join("tree.json")).unwrap()
    );
}

#[test]
fn exchange_weights_on_a_cycle_name_the_blocking_edge() {
    let dir = tempfile::tempdir().unwrap();
    let text = CYCLE_CONFIG.replace("name = \"odol\"", "name = \"oedol\"");
    let config = write_config(dir.path(), "cycle.toml", &text);
    let out = teamnet(&["weights", "--config", &config, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("closes a cycle"), "{}", stderr(&out));
}

#[test]
fn corrupted_weight_files_are_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "tree.toml", TREE_CONFIG);
    let weights_dir = dir.path().join("weights");
    let synth = teamnet(&[
        "weights", "--config", &config,
        "--out", weights_dir.to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&synth), 0, "{}", stderr(&synth));
    let victim = weights_dir.join("oedol_line.weights.json");
    let bytes = fs::read(&victim).unwrap();
    fs::write(&victim, &bytes[..bytes.len() / 2]).unwrap();

    for subcommand in ["simulate", "verify"] {
        let out = teamnet(&[
            subcommand, "--config", &config,
            "--weights", weights_dir.to_str().unwrap(),
            "--out", dir.path().join("out").to_str().unwrap(),
        ]);
        assert_eq!(exit_code(&out), 2, "{subcommand}: {}", stderr(&out));
        assert!(stderr(&out).contains("malformed"), "{}", stderr(&out));
    }
}

#[test]
fn verify_passes_on_a_tree() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "tree.toml", TREE_CONFIG);
    let out = teamnet(&["verify", "--config", &config, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("PASS relay_matches_batch_oracle"), "{text}");
    assert!(text.contains("PASS exchange_matches_relay"), "{text}");
    assert!(text.contains("PASS estimate_exchange_span"), "{text}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("tree_verify.json")).unwrap())
            .unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn verify_reports_the_cycle_as_expected_fail() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "cycle.toml", CYCLE_CONFIG);
    let out = teamnet(&["verify", "--config", &config, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    assert!(
        stdout(&out).contains("expected-fail-achievability"),
        "{}",
        stdout(&out)
    );
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("cycle_verify.json")).unwrap())
            .unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn preset_runs_end_to_end_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let out = teamnet(&[
        "simulate", "--preset", "fig6",
        "--trials", "2",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(exit_code(&out), 0, "{}", stderr(&out));
    for stem in [
        "fig6_fully_connected",
        "fig6_star",
        "fig6_random",
        "fig6_line",
    ] {
        assert!(dir.path().join(format!("{stem}.csv")).exists(), "{stem}.csv");
        assert!(dir.path().join(format!("{stem}.json")).exists(), "{stem}.json");
    }
    let comparison: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("fig6_comparison.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(comparison["trials"], 2);
    assert!(!comparison["entries"].as_array().unwrap().is_empty());
}
