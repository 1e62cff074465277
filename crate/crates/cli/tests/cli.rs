use std::path::Path;
use std::process::{Command, Output};

use certens::fixtures::{build_example1_fixture, dominant_model_fixture};
use certens::io::{load_records, read_predictions, save_records};
use tempfile::TempDir;

fn certens(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_certens"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_owned()
}

fn example1(dir: &TempDir) -> String {
    let p = path(dir, "example1.jsonl");
    save_records(&p, &build_example1_fixture()).unwrap();
    p
}

#[test]
fn evaluate_prints_uniform_voting_at_75() {
    let dir = TempDir::new().unwrap();
    let input = example1(&dir);
    let out = certens(&["evaluate", "--in", &input, "--format", "table"]);
    assert_eq!(out.status.code(), Some(0));
    let table = String::from_utf8(out.stdout).unwrap();
    let row = table
        .lines()
        .find(|l| l.starts_with("Uniform Voting"))
        .unwrap();
    assert_eq!(row.split_whitespace().nth(2), Some("75.00"), "{table}");
    for i in 0..3 {
        let row = table
            .lines()
            .find(|l| l.starts_with(&format!("Model {i}")))
            .unwrap();
        assert_eq!(row.split_whitespace().nth(2), Some("50.00"));
    }
    assert!(String::from_utf8_lossy(&out.stderr).contains("train = eval"));

    let csv = certens(&[
        "evaluate",
        "--in",
        &input,
        "--format",
        "csv",
        "--single-model",
        "first",
    ]);
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.contains("Uniform Voting,75.00,"), "{text}");
    assert!(text.contains("Single Model (Model 0),50.00,"), "{text}");
}

#[test]
fn ensemble_writes_one_prediction_per_record_in_order() {
    let dir = TempDir::new().unwrap();
    let input = example1(&dir);
    for method in ["cascade", "uniform", "weighted", "permutation"] {
        let out_path = path(&dir, &format!("{method}.jsonl"));
        let out = certens(&[
            "ensemble", "--in", &input, "--method", method, "--out", &out_path,
        ]);
        assert_eq!(out.status.code(), Some(0), "{method}");
        let preds = read_predictions(std::io::BufReader::new(
            std::fs::File::open(&out_path).unwrap(),
        ))
        .unwrap();
        let rs = load_records(&input).unwrap();
        assert_eq!(preds.len(), rs.len());
        for ((id, _), r) in preds.iter().zip(rs.records()) {
            assert_eq!(id, &r.input_id);
        }
    }
}

#[test]
fn ensemble_with_explicit_weights_and_options() {
    let dir = TempDir::new().unwrap();
    let input = example1(&dir);
    let w = path(&dir, "w.json");
    std::fs::write(&w, "[1, 1, 1]").unwrap();
    let out_path = path(&dir, "out.jsonl");
    let out = certens(&[
        "ensemble",
        "--in",
        &input,
        "--method",
        "weighted",
        "--weights",
        &w,
        "--out",
        &out_path,
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stderr.is_empty());
    let out = certens(&[
        "ensemble",
        "--in",
        &input,
        "--method",
        "permutation",
        "--fallback",
        "random:9",
        "--prefix-bound",
        "relaxed",
        "--out",
        &out_path,
    ]);
    assert_eq!(out.status.code(), Some(0));

    std::fs::write(&w, "[1, 1]").unwrap();
    let out = certens(&[
        "ensemble",
        "--in",
        &input,
        "--method",
        "weighted",
        "--weights",
        &w,
        "--out",
        &out_path,
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn learn_weights_is_deterministic_and_writes_trace() {
    let dir = TempDir::new().unwrap();
    let input = path(&dir, "dominant.jsonl");
    save_records(&input, &dominant_model_fixture()).unwrap();
    let mut outputs = Vec::new();
    for run in 0..2 {
        let w = path(&dir, &format!("w{run}.json"));
        let trace = path(&dir, &format!("t{run}.csv"));
        let out = certens(&[
            "learn-weights",
            "--in",
            &input,
            "--t",
            "1e5",
            "--lr",
            "1e-2",
            "--epochs",
            "500",
            "--param",
            "softmax",
            "--seed",
            "3",
            "--out",
            &w,
            "--trace",
            &trace,
        ]);
        assert_eq!(out.status.code(), Some(0));
        outputs.push((std::fs::read(&w).unwrap(), std::fs::read(&trace).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let weights = certens::io::load_weights(path(&dir, "w0.json")).unwrap();
    assert!(weights[0] > 0.9);
    let trace = String::from_utf8(outputs[0].1.clone()).unwrap();
    assert!(trace.starts_with("epoch,objective,best_objective\n"));
}

#[test]
fn toy_pipeline_exit_codes() {
    let dir = TempDir::new().unwrap();
    let grid = path(&dir, "grid.csv");
    let records = path(&dir, "grid.jsonl");
    let out = certens(&[
        "gen-toy",
        "--scenario",
        "fig1",
        "--seed",
        "0",
        "--h",
        "0.02",
        "--epsilon",
        "0.08",
        "--norm",
        "l2",
        "--out",
        &grid,
        "--records",
        &records,
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(load_records(&records).unwrap().len() == 101 * 101);

    let report = path(&dir, "v.csv");
    let out = certens(&[
        "check-soundness",
        "--grid",
        &grid,
        "--method",
        "cascade",
        "--epsilon",
        "0.08",
        "--norm",
        "l2",
        "--report",
        &report,
    ]);
    assert_eq!(out.status.code(), Some(3));
    let rows = std::fs::read_to_string(&report).unwrap().lines().count();
    assert!(rows >= 2);

    for method in ["uniform", "weighted"] {
        let out = certens(&[
            "check-soundness",
            "--grid",
            &grid,
            "--method",
            method,
            "--epsilon",
            "0.08",
        ]);
        assert_eq!(out.status.code(), Some(0), "{method}");
    }

    let svg = path(&dir, "fig.svg");
    let csv = path(&dir, "fig.csv");
    let out = certens(&[
        "export-figure",
        "--grid",
        &grid,
        "--out",
        &svg,
        "--csv",
        &csv,
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    assert!(Path::new(&csv).exists());
}

#[test]
fn gen_toy_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let a = path(&dir, "a.csv");
    let b = path(&dir, "b.csv");
    for out in [&a, &b] {
        let status = certens(&[
            "gen-toy",
            "--scenario",
            "random",
            "--seed",
            "5",
            "--h",
            "0.05",
            "--out",
            out,
        ]);
        assert_eq!(status.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(certens(&[]).status.code(), Some(1));
    assert_eq!(
        certens(&["ensemble", "--in", "x.jsonl", "--method", "median", "--out", "y"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        certens(&[
            "gen-toy",
            "--scenario",
            "fig1",
            "--h",
            "-1",
            "--out",
            "g.csv"
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(
        certens(&["learn-weights", "--in", "x", "--out", "y", "--epochs", "0"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(certens(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let empty = path(&dir, "empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = certens(&["evaluate", "--in", &empty]);
    assert_eq!(out.status.code(), Some(2));

    let bad = path(&dir, "bad.jsonl");
    std::fs::write(
        &bad,
        "{\"version\":1,\"N\":3,\"m\":10,\"epsilon\":0.1,\"norm\":\"linf\"}\n\
         {\"input_id\":\"img9\",\"true_label\":3,\"outputs\":[{\"label\":3,\"cert\":1},{\"label\":3,\"cert\":0}]}\n",
    )
    .unwrap();
    let out = certens(&["evaluate", "--in", &bad]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("img9"));

    let missing = path(&dir, "missing.jsonl");
    assert_eq!(
        certens(&["evaluate", "--in", &missing]).status.code(),
        Some(2)
    );

    let out = certens(&[
        "gen-toy",
        "--scenario",
        "thm1-minimal",
        "--epsilon",
        "0.5",
        "--h",
        "0.1",
        "--out",
        &path(&dir, "g.csv"),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
