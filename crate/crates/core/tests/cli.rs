use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn unitax(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unitax"))
        .args(args)
        .env_remove("UNITAX_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn compile_reports_counts() {
    let o = unitax(&["compile", path_str(&fixture("city_vistas.json"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "universal=65 naive=93 merge=72");
    let o = unitax(&["compile", path_str(&fixture("wd2_vistas.json"))]);
    assert_eq!(stdout(&o).trim(), "universal=67 naive=98 merge=76");
}

#[test]
fn compile_output_is_byte_stable() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for out in [&a, &b] {
        let o = unitax(&[
            "compile",
            path_str(&fixture("wd2_vistas.json")),
            "--out",
            path_str(out),
        ]);
        assert!(o.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    // The written universal taxonomy compiles back to itself.
    let o = unitax(&["compile", path_str(&a)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("universal=67 "));
}

#[test]
fn malformed_input_exits_with_usage_code() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"universe\": [\"a\",\n  \"b\"\n").unwrap();
    let o = unitax(&["compile", path_str(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));

    let o = unitax(&["compile", path_str(&dir.path().join("missing.json"))]);
    assert_eq!(o.status.code(), Some(2));

    let o = unitax(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn inspect_lists_relations() {
    let o = unitax(&["inspect", path_str(&fixture("wd2_vistas.json"))]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("dataset WildDash2"));
    assert!(text.contains("object--vehicle--van"));
}

#[test]
fn gradcheck_passes_and_catches_a_planted_bug() {
    let o = unitax(&["gradcheck", "--n", "200"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().last(), Some("PASS"));

    let o = unitax(&["gradcheck", "--n", "200", "--inject-bug"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o).lines().last(), Some("FAIL"));

    let o = unitax(&["gradcheck", "--n", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn seed_flag_overrides_environment() {
    let run = |env: Option<&str>, args: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_unitax"));
        cmd.args(args).env_remove("UNITAX_SEED");
        if let Some(v) = env {
            cmd.env("UNITAX_SEED", v);
        }
        stdout(&cmd.output().unwrap())
    };
    let args = ["gradcheck", "--n", "10"];
    assert!(run(Some("42"), &args).starts_with("gradcheck seed=42 "));
    assert!(run(Some("42"), &["gradcheck", "--n", "10", "--seed", "7"])
        .starts_with("gradcheck seed=7 "));
    assert!(run(None, &args).starts_with("gradcheck seed=0 "));
}

#[test]
fn list_variants() {
    let o = unitax(&["experiment", "--list-variants"]);
    assert!(o.status.success());
    let names: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(
        names,
        [
            "nll-baseline",
            "nll-max",
            "naive-concat",
            "partial-merge",
            "nll-plus",
            "oracle"
        ]
    );
}

#[test]
fn experiment_ranks_nll_plus_above_nll_max() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("e.json");
    let o = unitax(&[
        "experiment",
        "--loss",
        "nllplus",
        "--loss",
        "nllmax",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let miou = |name: &str| {
        report["results"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["model"] == name)
            .unwrap()["miou"]
            .as_f64()
            .unwrap()
    };
    assert!(miou("nll-plus") > miou("nll-max"));
    assert_eq!(report["results"].as_array().unwrap().len(), 2);
}

#[test]
fn export_matrices_json_and_csv() {
    let input = fixture("city_vistas.json");
    let o = unitax(&["export-matrices", path_str(&input), "--direction", "eval"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let cs = &v["matrices"]["Cityscapes"];
    assert_eq!(cs["rows"].as_array().unwrap().len(), 29);
    assert_eq!(cs["cols"].as_array().unwrap().len(), 65);

    let o = unitax(&["export-matrices", path_str(&input), "--format", "csv"]);
    assert_eq!(o.status.code(), Some(2));

    let o = unitax(&[
        "export-matrices",
        path_str(&input),
        "--kind",
        "naive-concat",
        "--dataset",
        "Vistas",
        "--format",
        "csv",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 65);
    for row in &lines {
        assert_eq!(row.split(',').filter(|&c| c == "1").count(), 1);
    }
}

#[test]
fn evaluate_counts_void_as_a_miss() {
    let dir = TempDir::new().unwrap();
    let input = dir.path().join("eval.json");
    let samples: Vec<String> = (0..10)
        .map(|k| {
            if k < 6 {
                r#"{"truth": 0, "prediction": 0}"#.to_string()
            } else {
                r#"{"truth": 0, "prediction": null}"#.to_string()
            }
        })
        .collect();
    fs::write(
        &input,
        format!(
            r#"{{"classes": ["c"], "samples": [{}]}}"#,
            samples.join(",")
        ),
    )
    .unwrap();
    let o = unitax(&["evaluate", path_str(&input)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["miou"].as_f64(), Some(0.6));

    fs::write(
        &input,
        r#"{"classes": ["a", "b"], "samples": [{"truth": 1, "probs": [0.2, 0.8]}]}"#,
    )
    .unwrap();
    let v: Value = serde_json::from_str(&stdout(&unitax(&["evaluate", path_str(&input)]))).unwrap();
    assert_eq!(v["miou"].as_f64(), Some(1.0));

    fs::write(&input, r#"{"classes": ["a"], "samples": [{"truth": 0}]}"#).unwrap();
    assert_eq!(
        unitax(&["evaluate", path_str(&input)]).status.code(),
        Some(2)
    );
}

#[test]
fn synth_train_on_two_splits() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("s.json");
    let spec = fixture("two_splits_spec.json");
    let o = unitax(&[
        "synth-train",
        "--spec",
        path_str(&spec),
        "--epochs",
        "60",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("mIoU"));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["seed"], 7);
    assert!(v["final_loss"].as_f64().unwrap() < v["initial_loss"].as_f64().unwrap());

    let o = unitax(&[
        "synth-train",
        "--spec",
        path_str(&spec),
        "--epochs",
        "60",
        "--loss",
        "nll",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(v["ignored_samples"].as_u64().unwrap() > 0);
}
