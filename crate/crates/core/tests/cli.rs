mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use approx::assert_abs_diff_eq;
use serde::Deserialize;
use serde_json::{json, Value};
use turntaking::cli::WeightsFile;
use turntaking::dataset::load_dataset;
use turntaking::experiments::{SelectionResult, Study1Report};
use turntaking::net::{NetworkWeights, OutputHead};
use turntaking::report::{envelope, SCHEMA_VERSION};

use common::{fixture_dir, uniform_no_memory_nll};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_turntaking")).args(args).env_remove("TURNTAKING_OUT").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn write_config(dir: &Path, v: Value) -> String {
    let path = dir.join("config.json");
    fs::write(&path, v.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).unwrap();
    r.records().map(|row| row.unwrap().iter().map(String::from).collect()).collect()
}

fn small_train() -> Value {
    json!({"max_epochs": 60, "patience": 20})
}

#[derive(Deserialize)]
struct Envelope<T> {
    schema_version: u32,
    command: String,
    results: T,
}

#[test]
fn eval_matches_closed_form_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let weights = WeightsFile {
        schema_version: SCHEMA_VERSION,
        trait_names: vec!["extraversion".into()],
        normalizer: None,
        same_traits: true,
        weights: NetworkWeights::zeros(1, OutputHead::NoMemory),
        best_epoch: 0,
        best_val_nll: 0.0,
    };
    let wpath = dir.path().join("weights.json");
    fs::write(&wpath, serde_json::to_string(&weights).unwrap()).unwrap();

    let bundle = load_dataset(fixture_dir()).unwrap();
    let expected = |full_only: bool| -> f64 {
        bundle
            .teams
            .iter()
            .flat_map(|t| &t.meetings)
            .filter(|m| !full_only || m.present.iter().all(|&p| p))
            .map(|m| uniform_no_memory_nll(m.present.iter().filter(|&&p| p).count(), m.speakers.len()))
            .sum()
    };
    let fixture = fixture_dir();
    for (flag, full_only) in [(None, false), (Some("--full-attendance"), true)] {
        let out = dir.path().join(if full_only { "full" } else { "all" });
        let mut args = vec![
            "eval",
            "--weights",
            wpath.to_str().unwrap(),
            "--data",
            fixture.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend(flag);
        ok(&args);
        let report: Value = serde_json::from_str(&fs::read_to_string(out.join("eval.json")).unwrap()).unwrap();
        assert_abs_diff_eq!(report["nll"].as_f64().unwrap(), expected(full_only), epsilon = 1e-9);
    }
    assert!(expected(true) < expected(false));
}

#[test]
fn train_then_curves_on_single_trait() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let cfg = write_config(dir.path(), json!({"study1": {"n_turns": 150}, "train": small_train()}));
    ok(&["generate", "--kind", "study1", "--seed", "4", "--config", &cfg, "--out", data.to_str().unwrap()]);
    let model = dir.path().join("model");
    ok(&[
        "train",
        "--data",
        data.join("train").to_str().unwrap(),
        "--val",
        data.join("val").to_str().unwrap(),
        "--traits",
        "a",
        "--seed",
        "4",
        "--config",
        &cfg,
        "--out",
        model.to_str().unwrap(),
    ]);
    let weights: WeightsFile = serde_json::from_str(&fs::read_to_string(model.join("weights.json")).unwrap()).unwrap();
    assert_eq!(weights.trait_names, ["a"]);
    assert!(weights.best_val_nll.is_finite());

    let curves = dir.path().join("curves");
    ok(&["curves", "--weights", model.join("weights.json").to_str().unwrap(), "--out", curves.to_str().unwrap()]);
    let rows = read_csv(&curves.join("curves_a.csv"));
    assert_eq!(rows[0], ["trait", "pi", "d", "peak"]);
    assert_eq!(rows.len(), 51);
    for r in &rows[1..] {
        let v: Vec<f64> = r.iter().map(|x| x.parse().unwrap()).collect();
        assert!(v[1] > 0.0 && v[2] >= 0.0);
        assert_abs_diff_eq!(v[3], v[1] + v[2] * (-0.5f64).exp(), epsilon = 1e-6 * v[3]);
    }

    let eval = dir.path().join("eval");
    let stdout = ok(&[
        "eval",
        "--weights",
        model.join("weights.json").to_str().unwrap(),
        "--data",
        data.join("test").to_str().unwrap(),
        "--out",
        eval.to_str().unwrap(),
    ]);
    assert!(stdout.starts_with("nll "));
}

#[test]
fn study1_report_round_trips_and_matrix_is_symmetric() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        json!({"study1": {"n_trials": 3, "n_turns": 120, "n_train_teams": 4, "n_val_teams": 2, "n_test_teams": 2,
                          "curve_points": 7, "train": small_train()}}),
    );
    let out = dir.path().join("s1");
    ok(&["study1", "--seed", "5", "--config", &cfg, "--out", out.to_str().unwrap()]);

    let text = fs::read_to_string(out.join("results.json")).unwrap();
    let env: Envelope<Study1Report> = serde_json::from_str(&text).unwrap();
    assert_eq!(env.schema_version, SCHEMA_VERSION);
    assert_eq!(env.command, "study1");
    assert_eq!(env.results.trials.len(), 3);
    let again = serde_json::to_string_pretty(&envelope("study1", &env.results).unwrap()).unwrap() + "\n";
    assert_eq!(again, text);
    let reloaded: Envelope<Study1Report> = serde_json::from_str(&again).unwrap();
    assert_eq!(reloaded.results, env.results);

    let m = read_csv(&out.join("pairwise_p.csv"));
    let names: Vec<&String> = m[0][1..].iter().collect();
    assert_eq!(m[0][0], "model");
    for (i, row) in m[1..].iter().enumerate() {
        assert_eq!(&row[0], names[i]);
        for j in 0..names.len() {
            assert_eq!(row[j + 1], m[j + 1][i + 1]);
        }
    }
    let curve = read_csv(&out.join("curves_a.csv"));
    assert_eq!(curve.len(), 8);
    let diffs = read_csv(&out.join("loss_diffs.csv"));
    assert_eq!(diffs[0], ["trial", "model", "nll", "loss_diff"]);
}

#[test]
fn forward_select_writes_steps_in_stage_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), json!({"study3": {"n_trials": 3, "max_traits": 2, "train": small_train()}}));
    let out = dir.path().join("fs");
    ok(&["forward-select", "--data", fixture_dir().to_str().unwrap(), "--seed", "2", "--config", &cfg, "--out", out.to_str().unwrap()]);
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("selection_path.json")).unwrap()).unwrap();
    let stages = |key: &str| -> Vec<u64> { v[key].as_array().unwrap().iter().map(|s| s["stage"].as_u64().unwrap()).collect() };
    let path = stages("path");
    assert!(!path.is_empty());
    assert!(path.iter().enumerate().all(|(i, &s)| s == i as u64 + 1));
    assert!(stages("candidates").windows(2).all(|w| w[0] <= w[1]));
    let env: Envelope<SelectionResult> =
        serde_json::from_str(&fs::read_to_string(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(env.results.path.len(), path.len());
    assert!(env.results.same_traits_nll.iter().all(|v| v.is_finite()));
}

#[test]
fn stats_command_reads_group_value_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("values.csv");
    fs::write(&input, "group,value\na,1\na,2\na,3\nb,4\nb,5\nb,6\n").unwrap();
    let out = dir.path().join("stats");
    ok(&["stats", "--input", input.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_abs_diff_eq!(v["results"]["test"]["statistic"].as_f64().unwrap(), 3.857_142_86, epsilon = 1e-8);

    ok(&["stats", "--input", input.to_str().unwrap(), "--test", "rank-sum", "--out", out.to_str().unwrap()]);
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(v["results"]["test"]["p_value"].as_f64().unwrap(), 0.1);
}

#[test]
fn usage_errors_exit_nonzero_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["study1", "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));

    let cfg = write_config(dir.path(), json!({"study4": {}}));
    let out = run(&["study1", "--seed", "1", "--config", &cfg]);
    assert!(!out.status.success());

    let out = run(&["study2", "--kind", "colour", "--seed", "1"]);
    assert!(!out.status.success());

    let out = run(&["bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn output_directory_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_turntaking"))
        .args(["generate", "--seed", "3"])
        .env("TURNTAKING_OUT", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(dir.path().join("members.csv").exists());
}
