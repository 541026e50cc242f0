use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn eforest(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eforest"))
        .args(args)
        .current_dir(dir)
        .env_remove("EFOREST_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Value {
    let out = eforest(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    serde_json::from_str(stdout.lines().last().unwrap_or("null")).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// 120 rows of 4 numeric columns plus an integer label in the last column.
fn numeric_csv(dir: &Path, name: &str, d: usize) -> PathBuf {
    let mut text = String::new();
    for i in 0..120u32 {
        let row: Vec<String> = (0..d).map(|j| ((i * 7 + j as u32 * 13) % 29).to_string()).collect();
        text.push_str(&format!("{},{}\n", row.join(","), i % 3));
    }
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn train_args<'a>(data: &'a str, kinds: &'a str, label_col: &'a str, mode: &'a str, out: &'a str) -> Vec<&'a str> {
    vec![
        "train",
        "--data",
        data,
        "--kinds",
        kinds,
        "--label-col",
        label_col,
        "--mode",
        mode,
        "--trees",
        "8",
        "--seed",
        "5",
        "--out",
        out,
    ]
}

#[test]
fn train_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    numeric_csv(dir.path(), "d.csv", 4);
    for mode in ["sup", "unsup"] {
        let a = ok(&train_args("d.csv", "num*4", "4", mode, "a.json"), dir.path());
        let b = ok(&train_args("d.csv", "num*4", "4", mode, "b.json"), dir.path());
        assert_eq!(a["hash"], b["hash"]);
        assert_eq!(
            std::fs::read(dir.path().join("a.json")).unwrap(),
            std::fs::read(dir.path().join("b.json")).unwrap()
        );
        let stats = ok(&["stats", "--model", "a.json"], dir.path());
        assert_eq!(stats["hash"], a["hash"]);
        assert_eq!(stats["trees"], 8);
    }
}

#[test]
fn thread_count_does_not_change_the_model() {
    let dir = tempfile::tempdir().unwrap();
    numeric_csv(dir.path(), "d.csv", 4);
    let mut one = train_args("d.csv", "num*4", "4", "unsup", "one.json");
    one.extend(["--threads", "1"]);
    let a = ok(&one, dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_eforest"))
        .args(train_args("d.csv", "num*4", "4", "unsup", "env.json"))
        .current_dir(dir.path())
        .env("EFOREST_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let b: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(a["hash"], b["hash"]);
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    numeric_csv(dir.path(), "d.csv", 4);
    let mut zero = train_args("d.csv", "num*4", "4", "unsup", "m.json");
    zero[10] = "0";
    assert_eq!(eforest(&zero, dir.path()).status.code(), Some(2));

    let no_labels = [
        "train", "--data", "d.csv", "--kinds", "num*5", "--mode", "sup", "--trees", "3", "--out", "m.json",
    ];
    let out = eforest(&no_labels, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("labels"));

    let no_kinds = [
        "train", "--data", "d.csv", "--mode", "unsup", "--trees", "3", "--out", "m.json",
    ];
    assert_eq!(eforest(&no_kinds, dir.path()).status.code(), Some(2));
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    numeric_csv(dir.path(), "d.csv", 4);
    std::fs::write(
        dir.path().join("c.json"),
        r#"{"n_trees": 3, "mode": "unsupervised", "seed": 9}"#,
    )
    .unwrap();
    let line = ok(
        &[
            "train",
            "--data",
            "d.csv",
            "--kinds",
            "num*4",
            "--label-col",
            "4",
            "--config",
            "c.json",
            "--trees",
            "4",
            "--out",
            "m.json",
        ],
        dir.path(),
    );
    assert_eq!(line["trees"], 4);
    let model: Value = serde_json::from_slice(&std::fs::read(dir.path().join("m.json")).unwrap()).unwrap();
    assert_eq!(model["config"]["seed"], 9);
    assert_eq!(model["config"]["n_trees"], 4);
    assert_eq!(model["config"]["bootstrap"], false);
}

#[test]
fn reconstruct_reports_and_dumps() {
    let dir = tempfile::tempdir().unwrap();
    numeric_csv(dir.path(), "d.csv", 4);
    ok(&train_args("d.csv", "num*4", "4", "unsup", "m.json"), dir.path());
    let line = ok(
        &[
            "reconstruct",
            "--model",
            "m.json",
            "--data",
            "d.csv",
            "--kinds",
            "num*4",
            "--label-col",
            "4",
            "--mask-keep",
            "0.5",
            "--mask-seed",
            "3",
            "--report",
            "r.json",
            "--values-csv",
            "r.csv",
            "--dump-recon",
            "recon.csv",
        ],
        dir.path(),
    );
    assert_eq!(line["config"]["mask_fraction"], 0.5);
    assert_eq!(line["config"]["mask_seed"], 3);
    assert_eq!(line["config"]["trees_used"], 4);
    let report: Value = serde_json::from_slice(&std::fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["n"], 120);
    assert!(report["mean"].as_f64().unwrap().is_finite());
    let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(csv.starts_with("sample_index,metric_value\n"));
    assert_eq!(csv.lines().count(), 121);
    let recon = std::fs::read_to_string(dir.path().join("recon.csv")).unwrap();
    assert_eq!(recon.lines().count(), 121);
}

#[test]
fn metric_domain_error_on_categorical_data() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    for i in 0..40 {
        text.push_str(&format!("{},{}\n", i % 7, ["RED", "GREEN"][i % 2]));
    }
    std::fs::write(dir.path().join("c.csv"), text).unwrap();
    let kinds = "num,cat:RED|GREEN";
    ok(
        &[
            "train", "--data", "c.csv", "--kinds", kinds, "--mode", "unsup", "--trees", "3", "--out", "m.json",
        ],
        dir.path(),
    );
    let out = eforest(
        &[
            "reconstruct",
            "--model",
            "m.json",
            "--data",
            "c.csv",
            "--kinds",
            kinds,
            "--metric",
            "cosine",
            "--report",
            "r.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("categorical"), "{}", stderr(&out));
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn reuse_checks_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    numeric_csv(dir.path(), "a.csv", 4);
    numeric_csv(dir.path(), "b.csv", 5);
    ok(&train_args("a.csv", "num*4", "4", "unsup", "m.json"), dir.path());
    let line = ok(
        &[
            "reuse",
            "--model",
            "m.json",
            "--data",
            "a.csv",
            "--kinds",
            "num*4",
            "--label-col",
            "4",
            "--mask-keep",
            "0.5",
            "--report",
            "r.json",
        ],
        dir.path(),
    );
    assert_eq!(line["run"], "reuse");
    assert_eq!(line["config"]["reuse"], true);
    let out = eforest(
        &[
            "reuse",
            "--model",
            "m.json",
            "--data",
            "b.csv",
            "--kinds",
            "num*5",
            "--label-col",
            "5",
            "--report",
            "r2.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("schema mismatch"), "{}", stderr(&out));
}

#[test]
fn encode_decode_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    numeric_csv(dir.path(), "d.csv", 4);
    ok(&train_args("d.csv", "num*4", "4", "unsup", "m.json"), dir.path());
    ok(&train_args("d.csv", "num*4", "4", "sup", "other.json"), dir.path());
    let line = ok(
        &[
            "encode",
            "--model",
            "m.json",
            "--data",
            "d.csv",
            "--kinds",
            "num*4",
            "--label-col",
            "4",
            "--out",
            "e.csv",
        ],
        dir.path(),
    );
    assert_eq!(line["rows"], 120);
    let enc = std::fs::read_to_string(dir.path().join("e.csv")).unwrap();
    assert!(enc.starts_with("eforest-enc v1 n=120 T=8 forest="));
    ok(
        &[
            "decode",
            "--model",
            "m.json",
            "--encodings",
            "e.csv",
            "--strategy",
            "mean",
            "--out",
            "r.csv",
        ],
        dir.path(),
    );
    let rows = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(rows.lines().count(), 121);

    let out = eforest(
        &[
            "decode",
            "--model",
            "other.json",
            "--encodings",
            "e.csv",
            "--out",
            "x.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("model mismatch"), "{}", stderr(&out));
}

#[test]
fn damage_sweep() {
    let dir = tempfile::tempdir().unwrap();
    numeric_csv(dir.path(), "d.csv", 4);
    ok(&train_args("d.csv", "num*4", "4", "unsup", "m.json"), dir.path());
    let args = [
        "damage",
        "--model",
        "m.json",
        "--data",
        "d.csv",
        "--kinds",
        "num*4",
        "--label-col",
        "4",
        "--report",
        "dmg.json",
    ];
    ok(&args, dir.path());
    let reports: Value = serde_json::from_slice(&std::fs::read(dir.path().join("dmg.json")).unwrap()).unwrap();
    let used: Vec<u64> = reports
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["config"]["trees_used"].as_u64().unwrap())
        .collect();
    assert_eq!(used, [2, 4, 6, 8]);

    let mut bad = args.to_vec();
    bad.extend(["--keep", "0.5,0.01"]);
    let out = eforest(&bad, dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("less than one tree"), "{}", stderr(&out));
}

#[test]
fn corrupted_model_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    numeric_csv(dir.path(), "d.csv", 4);
    ok(&train_args("d.csv", "num*4", "4", "unsup", "m.json"), dir.path());
    let path = dir.path().join("m.json");
    let text = std::fs::read_to_string(&path).unwrap();
    let tampered = text.replacen("\"seed\":5,\"trees\"", "\"seed\":6,\"trees\"", 1);
    assert_ne!(text, tampered);
    std::fs::write(&path, tampered).unwrap();
    let out = eforest(&["stats", "--model", "m.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("corrupt"), "{}", stderr(&out));
    std::fs::write(&path, &text[..text.len() / 3]).unwrap();
    assert_eq!(
        eforest(&["stats", "--model", "m.json"], dir.path()).status.code(),
        Some(1)
    );
}

#[test]
fn gen_text_writes_loadable_csv() {
    let dir = tempfile::tempdir().unwrap();
    let line = ok(
        &[
            "gen-text", "--docs", "50", "--vocab", "40", "--topics", "4", "--out", "t.csv",
        ],
        dir.path(),
    );
    assert_eq!(line["kinds"], "num*40");
    let trained = ok(
        &[
            "train",
            "--data",
            "t.csv",
            "--header",
            "--kinds",
            "num*40",
            "--label-col",
            "40",
            "--mode",
            "sup",
            "--trees",
            "3",
            "--out",
            "m.json",
        ],
        dir.path(),
    );
    assert_eq!(trained["rows"], 50);
}
