use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mondrian_core::io::{format_float, load_csv, DatasetSpec, LabelColumn};
use mondrian_core::{save_model, ForestConfig, ForestModel, PosteriorMode};
use tempfile::TempDir;

fn mondrian(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mondrian")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mondrian(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn sine_file(dir: &TempDir, name: &str, n: usize, seed: u64) -> PathBuf {
    let path = dir.path().join(name);
    ok(&["benchgen", "sine", "--n", &n.to_string(), "--seed", &seed.to_string(), "--output", s(&path)]);
    path
}

#[test]
fn train_is_deterministic_given_seed() {
    let dir = TempDir::new().unwrap();
    let data = sine_file(&dir, "train.csv", 300, 1);
    let a = dir.path().join("a.model");
    let b = dir.path().join("b.model");
    for m in [&a, &b] {
        ok(&["train", "--data", s(&data), "--model", s(m), "--trees", "10", "--seed", "7"]);
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn cli_train_matches_library() {
    let dir = TempDir::new().unwrap();
    let data = sine_file(&dir, "train.csv", 200, 2);
    let model_path = dir.path().join("m.model");
    ok(&["train", "--data", s(&data), "--model", s(&model_path), "--trees", "4", "--min-samples-split", "5", "--mode", "fast", "--seed", "3"]);

    let slice = load_csv(&DatasetSpec::new(&data, LabelColumn::Name("y".into()))).unwrap();
    let config = ForestConfig { num_trees: 4, min_samples_split: 5, mode: PosteriorMode::FastEmpirical, master_seed: 3 };
    let model = ForestModel::train(&slice, config).unwrap();
    let mut bytes = Vec::new();
    save_model(&model, &mut bytes).unwrap();
    assert_eq!(std::fs::read(&model_path).unwrap(), bytes);

    let out = ok(&["predict", "--model", s(&model_path), "--input", s(&data), "--label", "y"]);
    let first = out.lines().nth(1).unwrap();
    let mixture = model.predict(slice.row(0)).unwrap();
    let (mean, var) = mixture.moments();
    let expected = [mean, var.sqrt(), -mixture.log_density(slice.label(0))].map(format_float).join(",");
    assert_eq!(first, expected);
}

#[test]
fn predict_schema() {
    let dir = TempDir::new().unwrap();
    let data = sine_file(&dir, "train.csv", 150, 4);
    let model = dir.path().join("m.model");
    ok(&["train", "--data", s(&data), "--model", s(&model), "--seed", "1"]);

    let inputs = dir.path().join("x.csv");
    std::fs::write(&inputs, "x0\n-7\n0\n0.5\n12\n").unwrap();
    let out = ok(&["predict", "--model", s(&model), "--input", s(&inputs)]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "mean,std");
    assert_eq!(lines.len(), 5);
    for line in &lines[1..] {
        let fields: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(fields.len(), 2);
        assert!(fields[1] > 0.0);
    }

    let out = ok(&["predict", "--model", s(&model), "--input", s(&data), "--label", "y"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "mean,std,nlpd");
    assert_eq!(lines.len(), 151);
}

#[test]
fn evaluate_on_training_set() {
    let dir = TempDir::new().unwrap();
    let data = sine_file(&dir, "train.csv", 400, 5);
    let model = dir.path().join("m.model");
    ok(&["train", "--data", s(&data), "--model", s(&model), "--seed", "2"]);
    let out = ok(&["evaluate", "--model", s(&model), "--data", s(&data)]);
    let mut sections = out.split("\n\n");
    let metrics = sections.next().unwrap();
    let calibration = sections.next().unwrap();
    for name in ["rmse", "nlpd"] {
        let line = metrics.lines().find(|l| l.starts_with(name)).unwrap();
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(v.is_finite());
    }
    let rows: Vec<&str> = calibration.lines().skip(1).filter(|l| !l.is_empty()).collect();
    assert_eq!(rows.len(), 9);

    let out = ok(&["evaluate", "--model", s(&model), "--data", s(&data), "--layout", "columns", "--levels", "0.5,0.9"]);
    let table: Vec<&str> = out.split("\n\n").nth(1).unwrap().lines().collect();
    assert_eq!(table[0], "0.5,0.9");
    assert_eq!(table[1].split(',').count(), 2);
}

#[test]
fn bayesopt_on_builtin_benchmark() {
    let out = ok(&["bayesopt", "--benchmark", "branin", "--grid-size", "500", "--budget", "25", "--seed", "1"]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "iter,index,value,best");
    assert_eq!(lines.len(), 26);
    let best: Vec<f64> = lines[1..].iter().map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(best.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn bayesopt_on_grid_file() {
    let dir = TempDir::new().unwrap();
    let grid = dir.path().join("grid.csv");
    ok(&["benchgen", "grid", "--benchmark", "hartmann6", "--size", "300", "--seed", "9", "--output", s(&grid)]);
    let out = ok(&["bayesopt", "--grid", s(&grid), "--objective-col", "value", "--budget", "20", "--seed", "4"]);
    assert_eq!(out.lines().count(), 21);
    let out = ok(&["bayesopt", "--grid", s(&grid), "--objective-col", "6", "--log-cols", "0,1", "--budget", "5", "--seed", "4"]);
    assert_eq!(out.lines().count(), 6);
}

#[test]
fn missing_seed_is_reported() {
    let out = mondrian(&["benchgen", "sine", "--n", "5"]);
    assert!(out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.starts_with("seed: "));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 6);
}

#[test]
fn failures_exit_nonzero() {
    let dir = TempDir::new().unwrap();
    let data = sine_file(&dir, "train.csv", 20, 1);
    let model = dir.path().join("m.model");
    let out = mondrian(&["train", "--data", s(&data), "--model", s(&model), "--budget", "5"]);
    assert!(!out.status.success());
    assert!(!mondrian(&["train", "--bogus"]).status.success());

    let out = mondrian(&["train", "--data", "/nonexistent.csv", "--model", s(&model), "--seed", "1"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1);
    assert!(stderr.starts_with("error: "));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x,y\n1,2\n3,NaN\n").unwrap();
    let out = mondrian(&["train", "--data", s(&bad), "--model", s(&model), "--seed", "1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 3, column 2"));

    let out = mondrian(&["bayesopt", "--benchmark", "branin", "--grid-size", "10", "--budget", "11", "--seed", "1"]);
    assert!(!out.status.success());
}
