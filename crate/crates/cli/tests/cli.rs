use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn auxfuse(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_auxfuse"))
        .current_dir(cwd)
        .args(args)
        .output()
        .unwrap()
}

fn ok(cwd: &Path, args: &[&str]) -> String {
    let out = auxfuse(cwd, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(cwd: &Path) {
    ok(
        cwd,
        &[
            "synth", "--out", "ds", "--seed", "3", "--identities", "8", "--samples-per-identity", "6",
            "--block", "reid:4:grouped2", "--block", "tattoo:3:informative:3", "--train-fraction", "0.5",
        ],
    );
}

#[test]
fn pipeline_from_synth_to_attribution() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    assert!(ok(d, &["check", "ds"]).contains("8 identities"));

    fs::write(d.join("train.json"), r#"{"epochs": 3}"#).unwrap();
    ok(d, &["train", "ds", "--config", "train.json", "--aux", "tattoo", "--mode", "att", "--out", "m"]);
    for f in ["model.json", "model.f32", "history.csv", "config.json"] {
        assert!(d.join("m").join(f).exists(), "missing {f}");
    }
    let echo: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("m/config.json")).unwrap()).unwrap();
    assert_eq!(echo["epochs"], 3);
    assert_eq!(echo["lr"], 0.0003);
    assert_eq!(echo["batch_size"], 32);
    assert_eq!(fs::read_to_string(d.join("m/history.csv")).unwrap().lines().count(), 4);

    let table = ok(d, &["eval", "ds", "--model", "m", "--out", "ev", "--label", "Att"]);
    assert!(table.contains("| mAP |"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("ev/report.json")).unwrap()).unwrap();
    assert!(report["mAP"].as_f64().unwrap() > 0.0);

    ok(d, &["attribute", "ds", "--model", "m", "--out", "at", "--samples", "4", "--steps", "20"]);
    let csv = fs::read_to_string(d.join("at/attributions.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("block,positive,negative,net"));
    assert_eq!(csv.lines().count(), 3);
    assert!(d.join("at/attributions.json").exists());
}

#[test]
fn trajectory_block_merges_through_check() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(d.join("ds/manifest.json")).unwrap()).unwrap();
    // written in reverse manifest order so the merge has to reorder rows
    let mut lines = String::new();
    for (i, s) in manifest["samples"].as_array().unwrap().iter().enumerate().rev() {
        let pts: Vec<[f64; 2]> = (0..20).map(|t| [i as f64 + 0.5 * t as f64, 10.0 - 0.3 * t as f64]).collect();
        lines.push_str(&serde_json::json!({"id": s["id"], "points": pts}).to_string());
        lines.push('\n');
    }
    fs::write(d.join("traj.jsonl"), lines).unwrap();
    ok(d, &["traj", "traj.jsonl", "--epochs", "2", "--hidden", "6", "--out", "tr"]);
    fs::copy(d.join("tr/trajectory.f32"), d.join("ds/trajectory.f32")).unwrap();
    fs::copy(d.join("tr/trajectory.json"), d.join("ds/trajectory.json")).unwrap();
    let out = ok(d, &["check", "ds", "--merge", "ds/trajectory.json"]);
    assert!(out.contains("trajectory dim 6"), "{out}");
    assert_eq!(fs::read_to_string(d.join("tr/trajectory_history.csv")).unwrap().lines().count(), 3);
}

#[test]
fn experiment_is_reproducible_and_seed_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d);
    fs::write(
        d.join("exp.json"),
        r#"{"dataset": "ds", "variants": [[], ["tattoo"]], "repeats": 2, "train": {"epochs": 2}}"#,
    )
    .unwrap();
    for out in ["a", "b"] {
        ok(d, &["experiment", "--config", "exp.json", "--seed", "5", "--out", out]);
    }
    ok(d, &["experiment", "--config", "exp.json", "--seed", "6", "--out", "c"]);
    let read = |p: &str| fs::read(d.join(p)).unwrap();
    assert_eq!(read("a/experiment.json"), read("b/experiment.json"));
    assert_ne!(read("a/experiment.json"), read("c/experiment.json"));
    for f in ["experiment.md", "experiment.csv", "runs/1/tattoo/concat/report.json", "runs/0/baseline/attention/model.f32"] {
        assert!(d.join("a").join(f).exists(), "missing {f}");
    }
}

#[test]
fn failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(!auxfuse(d, &["check", "missing"]).status.success());
    synth(d);
    let bad_block = auxfuse(d, &["train", "ds", "--aux", "logo", "--out", "m"]);
    assert!(!bad_block.status.success());
    assert!(String::from_utf8_lossy(&bad_block.stderr).contains("logo"));
    fs::write(d.join("exp.json"), r#"{"dataset": "ds", "variants": []}"#).unwrap();
    assert!(!auxfuse(d, &["experiment", "--config", "exp.json"]).status.success());
    assert!(!auxfuse(d, &["synth", "--block", "reid:x:informative"]).status.success());
    // truncated block file
    let f32_path = d.join("ds/tattoo.f32");
    let bytes = fs::read(&f32_path).unwrap();
    fs::write(&f32_path, &bytes[..bytes.len() - 4]).unwrap();
    let out = auxfuse(d, &["check", "ds"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("dim mismatch"));
}
