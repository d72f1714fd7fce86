use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pavegraph::data::{EDGE_HEADER, OBSERVATION_HEADER};
use pavegraph::model::Checkpoint;
use pavegraph::workflow::{FileDigest, RunManifest, MANIFEST_FILE};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const CONFIG: &str = "\
seed = 3
synth.num_segments = 30
synth.target_arcs = 58
model.heads = 2
model.d_head = 8
model.gru_hidden = 16
model.head_hidden = 16
train.epochs = 4
explain.steps = 15
explain.repeats = 2
";

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("run.cfg"), CONFIG).unwrap();
        Self { dir }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }

    fn run(&self, args: &[&str]) -> Output {
        let cfg = self.path("run.cfg");
        Command::new(env!("CARGO_BIN_EXE_pavegraph"))
            .current_dir(self.dir.path())
            .arg("--config")
            .arg(&cfg)
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

fn csv_rows(path: &Path, header: &[&str]) -> Vec<csv::StringRecord> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let found: Vec<String> = reader.headers().unwrap().iter().map(str::to_owned).collect();
    assert_eq!(found, header, "{}", path.display());
    reader.records().map(Result::unwrap).collect()
}

fn number(rec: &csv::StringRecord, col: usize) -> f64 {
    rec[col].parse().unwrap_or_else(|_| panic!("not a number: {:?}", &rec[col]))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// The manifest lists exactly the other files in `dir`, with matching digests.
fn check_manifest(dir: &Path, command: &str) -> RunManifest {
    let m = RunManifest::read(dir).unwrap();
    assert_eq!(m.command, command);
    let mut listed: Vec<&str> = m.outputs.iter().map(|f| f.path.as_str()).collect();
    listed.sort_unstable();
    let mut present: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != MANIFEST_FILE)
        .collect();
    present.sort_unstable();
    assert_eq!(listed, present);
    for FileDigest { path, sha256, bytes } in &m.outputs {
        let data = fs::read(dir.join(path)).unwrap();
        assert_eq!(data.len() as u64, *bytes);
        assert_eq!(hex::encode(Sha256::digest(&data)), *sha256);
    }
    m
}

#[test]
fn full_command_chain_writes_valid_files() {
    let ws = Workspace::new();
    ws.ok(&["--out", "data", "synth"]);
    check_manifest(&ws.path("data"), "synth");
    let header: Vec<&str> = OBSERVATION_HEADER.split(',').collect();
    assert_eq!(csv_rows(&ws.path("data/observations.csv"), &header).len(), 30 * 4);
    let header: Vec<&str> = EDGE_HEADER.split(',').collect();
    assert_eq!(csv_rows(&ws.path("data/edges.csv"), &header).len(), 58);

    ws.ok(&["--out", "model", "train", "--data", "data", "--variant", "full"]);
    let m = check_manifest(&ws.path("model"), "train");
    assert_eq!(m.inputs.len(), 2);
    assert_eq!(m.seed, 3);
    let ckpt = Checkpoint::read(&ws.path("model/checkpoint.json")).unwrap();
    assert_eq!(ckpt.feature_names.len(), 11);
    let report = json(&ws.path("model/train_report.json"));
    assert_eq!(report["epochs"].as_array().unwrap().len(), 4);

    ws.ok(&["--out", "eval", "eval", "--checkpoint", "model/checkpoint.json", "--data", "data"]);
    check_manifest(&ws.path("eval"), "eval");
    let metrics = json(&ws.path("eval/metrics.json"));
    for key in ["mse", "rmse", "mae", "r2"] {
        assert!(metrics["report"][key].is_number(), "{key}");
    }
    let preds = csv_rows(&ws.path("eval/predictions.csv"), &["segment_id", "year", "predicted_pci", "actual_pci"]);
    assert_eq!(preds.len(), 30);
    assert!(preds.iter().all(|r| &r[1] == "2024" && number(r, 2).is_finite()));
    let rec = csv_rows(&ws.path("eval/rec_curve.csv"), &["tolerance", "coverage"]);
    assert!(rec.windows(2).all(|w| number(&w[0], 1) <= number(&w[1], 1)));

    ws.ok(&["--out", "prio", "prioritize", "--checkpoint", "model/checkpoint.json", "--data", "data", "--k", "5"]);
    check_manifest(&ws.path("prio"), "prioritize");
    let profile_header = [
        "priority_rank",
        "segment_id",
        "predicted_pci",
        "predicted_class",
        "actual_pci",
        "actual_class",
        "recommended_action",
    ];
    let profile = csv_rows(&ws.path("prio/profile.csv"), &profile_header);
    assert_eq!(profile.len(), 30);
    let ranks: Vec<f64> = profile.iter().map(|r| number(r, 0)).collect();
    assert!(ranks.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(csv_rows(&ws.path("prio/top_k.csv"), &profile_header).len(), 5);
    let safety = json(&ws.path("prio/safety.json"));
    let total = safety["total"].as_u64().unwrap();
    let adjacent = safety["adjacent_count"].as_u64().unwrap();
    assert_eq!(total, 30);
    assert_eq!(safety["critical_count"].as_u64().unwrap(), total - adjacent);

    ws.ok(&["--out", "global", "explain", "--checkpoint", "model/checkpoint.json", "--data", "data", "--global"]);
    check_manifest(&ws.path("global"), "explain");
    let imp = csv_rows(&ws.path("global/importance.csv"), &["feature", "raw", "normalized"]);
    assert_eq!(imp.len(), 11);
    let scores: Vec<f64> = imp.iter().map(|r| number(r, 2)).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    assert!((scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);

    ws.ok(&["--out", "node", "explain", "--checkpoint", "model/checkpoint.json", "--data", "data", "--node", "seg0004"]);
    check_manifest(&ws.path("node"), "explain");
    let feats = csv_rows(&ws.path("node/node_features.csv"), &["feature", "mask", "score"]);
    assert_eq!(feats.len(), 11);
    assert!(feats.iter().all(|r| (0.0..=1.0).contains(&number(r, 1))));
    let edges = csv_rows(&ws.path("node/node_edges.csv"), &["src_segment_id", "dst_segment_id", "mask"]);
    assert_eq!(edges.len(), 29);
    let summary = json(&ws.path("node/node_summary.json"));
    assert_eq!(summary["segment_id"], "seg0004");
    assert_eq!(summary["trace"].as_array().unwrap().len(), 15);

    fs::write(ws.path("grid.txt"), "variant = mlp, vanilla\nseed = 1, 2\n").unwrap();
    ws.ok(&["--out", "ablate", "ablate", "--data", "data", "--grid", "grid.txt"]);
    check_manifest(&ws.path("ablate"), "ablate");
    let mut reader = csv::Reader::from_path(ws.path("ablate/ablation.csv")).unwrap();
    let header = reader.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 4);
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let cells: Vec<&str> = rows.iter().map(|r| &r[col("variant")]).collect();
    assert_eq!(cells, ["mlp", "mlp", "vanilla", "vanilla"]);
    assert!(rows.iter().all(|r| number(r, col("rmse")).is_finite()));
}

#[test]
fn reruns_are_byte_identical() {
    let ws = Workspace::new();
    ws.ok(&["--out", "data", "synth"]);
    let other = Workspace::new();
    other.ok(&["--out", "data", "synth"]);
    for dir in ["a", "b"] {
        ws.ok(&["--out", dir, "train", "--data", "data", "--variant", "resgat"]);
    }
    for name in ["manifest.json", "checkpoint.json", "train_report.json"] {
        assert_eq!(
            fs::read(ws.path("a").join(name)).unwrap(),
            fs::read(ws.path("b").join(name)).unwrap(),
            "{name}"
        );
    }
    for name in ["manifest.json", "observations.csv", "edges.csv"] {
        assert_eq!(
            fs::read(ws.path("data").join(name)).unwrap(),
            fs::read(other.path("data").join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn seed_flag_changes_outputs() {
    let ws = Workspace::new();
    ws.ok(&["--out", "a", "synth"]);
    ws.ok(&["--out", "b", "--seed", "4", "synth"]);
    assert_ne!(
        fs::read(ws.path("a/observations.csv")).unwrap(),
        fs::read(ws.path("b/observations.csv")).unwrap()
    );
    assert_eq!(RunManifest::read(&ws.path("b")).unwrap().seed, 4);
}

#[test]
fn mlp_checkpoint_ignores_edges() {
    let ws = Workspace::new();
    ws.ok(&["--out", "data", "synth"]);
    ws.ok(&["--out", "model", "train", "--data", "data", "--variant", "mlp"]);

    let mut ids: Vec<String> = (0..30).map(|i| format!("seg{i:04}")).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
    let mut edges = format!("{EDGE_HEADER}\n");
    for w in ids.windows(2) {
        edges.push_str(&format!("{},{}\n", w[0], w[1]));
    }
    fs::write(ws.path("shuffled_edges.csv"), edges).unwrap();
    assert_ne!(
        fs::read_to_string(ws.path("shuffled_edges.csv")).unwrap(),
        fs::read_to_string(ws.path("data/edges.csv")).unwrap()
    );

    ws.ok(&["--out", "orig", "eval", "--checkpoint", "model/checkpoint.json", "--data", "data"]);
    ws.ok(&[
        "--out",
        "moved",
        "eval",
        "--checkpoint",
        "model/checkpoint.json",
        "--observations",
        "data/observations.csv",
        "--edges",
        "shuffled_edges.csv",
    ]);
    assert_eq!(
        fs::read(ws.path("orig/predictions.csv")).unwrap(),
        fs::read(ws.path("moved/predictions.csv")).unwrap()
    );
}

#[test]
fn forecast_year_has_no_safety_report() {
    let ws = Workspace::new();
    ws.ok(&["--out", "data", "synth"]);
    ws.ok(&["--out", "model", "train", "--data", "data"]);
    ws.ok(&["--out", "next", "prioritize", "--checkpoint", "model/checkpoint.json", "--data", "data", "--year", "2025"]);
    assert!(!ws.path("next/safety.json").exists());
    let rows = csv_rows(
        &ws.path("next/profile.csv"),
        &[
            "priority_rank",
            "segment_id",
            "predicted_pci",
            "predicted_class",
            "actual_pci",
            "actual_class",
            "recommended_action",
        ],
    );
    assert!(rows.iter().all(|r| r[4].is_empty() && r[5].is_empty()));
    let out = ws.run(&["--out", "far", "prioritize", "--checkpoint", "model/checkpoint.json", "--data", "data", "--year", "2030"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    let ws = Workspace::new();
    ws.ok(&["--out", "data", "synth"]);
    let cases: [&[&str]; 4] = [
        &["train", "--data", "data", "--variant", "transformer"],
        &["frobnicate"],
        &["ablate", "--data", "data", "--preset", "everything"],
        &["eval", "--checkpoint", "x.json", "--data", "data", "--split", "holdout"],
    ];
    for args in cases {
        let out = ws.run(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    fs::write(ws.path("run.cfg"), "train.epochz = 3\n").unwrap();
    assert_eq!(ws.run(&["synth"]).status.code(), Some(2));
}

#[test]
fn runtime_failures_exit_one() {
    let ws = Workspace::new();
    let out = ws.run(&["train", "--data", "no_such_dir"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));

    ws.ok(&["--out", "data", "synth"]);
    fs::write(ws.path("bad.json"), "{\"format\": 1}").unwrap();
    let out = ws.run(&["eval", "--checkpoint", "bad.json", "--data", "data"]);
    assert_eq!(out.status.code(), Some(1));
}
