use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

fn graphat(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graphat"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("failed to spawn graphat")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = graphat(args, cwd);
    assert!(
        out.status.success(),
        "graphat {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn synth(dir: &Path, seed: &str) -> PathBuf {
    let name = format!("sbm{seed}.json");
    ok(&["gen-synth", "--out", &name, "--seed", seed], dir);
    dir.join(name)
}

/// History rows without the wall-clock column.
fn trajectory(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_owned())
        .collect()
}

#[test]
fn gen_synth_is_deterministic_and_loadable() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "4");
    let b = dir.path().join("again.json");
    ok(&["gen-synth", "--out", "again.json", "--seed", "4"], dir.path());
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let doc: Value = serde_json::from_slice(&fs::read(&a).unwrap()).unwrap();
    assert_eq!(doc["num_nodes"], 200);
    assert_eq!(doc["train_nodes"].as_array().unwrap().len(), 40);
}

#[test]
fn gen_synth_rejects_bad_probability() {
    let dir = tempfile::tempdir().unwrap();
    let out = graphat(&["gen-synth", "--out", "x.json", "--p-in", "1.5"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("p_in"));
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn train_writes_exactly_the_declared_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "0");
    let start = Instant::now();
    let stdout = ok(
        &["train", "--dataset", "sbm0.json", "--mode", "gcn", "--out", "run"],
        dir.path(),
    );
    assert!(start.elapsed().as_secs() < 60);
    let manifest: Value = serde_json::from_str(&stdout).unwrap();
    let mut files: Vec<_> = fs::read_dir(dir.path().join("run"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    files.sort();
    assert_eq!(files, ["checkpoint.json", "eval.json", "history.csv"]);
    for key in ["checkpoint", "history", "eval"] {
        let p = manifest["artifacts"][key].as_str().unwrap();
        assert!(dir.path().join(p).exists(), "{p}");
    }
    assert_eq!(manifest["config"]["mode"], "gcn");
}

#[test]
fn train_requires_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = graphat(&["train", "--out", "run"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--dataset"));
}

#[test]
fn train_rejects_unknown_mode_and_bad_values() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "0");
    assert!(!graphat(
        &["train", "--dataset", "sbm0.json", "--out", "r", "--mode", "gan"],
        dir.path()
    )
    .status
    .success());
    let out = graphat(
        &[
            "train",
            "--dataset",
            "sbm0.json",
            "--out",
            "r",
            "--mode",
            "graphat",
            "--epsilon",
            "0",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(!dir.path().join("r").exists());
}

#[test]
fn graphat_without_regularizer_reproduces_gcn() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "1");
    let common = ["train", "--dataset", "sbm1.json", "--seed", "3", "--dropout", "0.5"];
    ok(&[&common[..], &["--mode", "gcn", "--out", "gcn"]].concat(), dir.path());
    ok(
        &[&common[..], &["--mode", "graphat", "--beta", "0", "--out", "at"]].concat(),
        dir.path(),
    );
    assert_eq!(
        trajectory(&dir.path().join("gcn/history.csv")),
        trajectory(&dir.path().join("at/history.csv"))
    );
}

#[test]
fn eval_agrees_with_training_history() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "2");
    let manifest: Value = serde_json::from_str(&ok(
        &["train", "--dataset", "sbm2.json", "--mode", "graphat", "--out", "run"],
        dir.path(),
    ))
    .unwrap();
    let report: Value = serde_json::from_str(&ok(
        &[
            "eval",
            "--dataset",
            "sbm2.json",
            "--checkpoint",
            "run/checkpoint.json",
            "--csv",
            "e.csv",
        ],
        dir.path(),
    ))
    .unwrap();
    let best = manifest["test_accuracy"].as_f64().unwrap();
    assert!((report["test_accuracy"].as_f64().unwrap() - best).abs() <= 1e-12);

    let history = fs::read_to_string(dir.path().join("run/history.csv")).unwrap();
    let epoch = manifest["best_epoch"].as_u64().unwrap() as usize;
    let row: Vec<&str> = history.lines().nth(epoch).unwrap().split(',').collect();
    assert!((row[6].parse::<f64>().unwrap() - best).abs() <= 1e-12);

    let saved: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run/eval.json")).unwrap()).unwrap();
    assert_eq!(saved, report);
    assert_eq!(fs::read_to_string(dir.path().join("e.csv")).unwrap().lines().count(), 2);
}

#[test]
fn attack_is_zero_at_zero_epsilon_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "5");
    ok(
        &["train", "--dataset", "sbm5.json", "--mode", "gcn", "--out", "run"],
        dir.path(),
    );
    let base = [
        "attack",
        "--dataset",
        "sbm5.json",
        "--checkpoint",
        "run/checkpoint.json",
    ];
    let zero: Value = serde_json::from_str(&ok(&[&base[..], &["--attack-epsilon", "0"]].concat(), dir.path())).unwrap();
    assert_eq!(zero["relative_change"].as_f64(), Some(0.0));
    assert_eq!(zero["attacked_accuracy"], zero["clean_accuracy"]);
    let run = || {
        ok(
            &[&base[..], &["--attack-epsilon", "0.5", "--seed", "9"]].concat(),
            dir.path(),
        )
    };
    assert_eq!(run(), run());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "6");
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"mode": "graphvat", "beta": 0.3, "epsilon": 0.2, "max_epochs": 5}"#,
    )
    .unwrap();
    let manifest: Value = serde_json::from_str(&ok(
        &[
            "train",
            "--dataset",
            "sbm6.json",
            "--config",
            "cfg.json",
            "--epsilon",
            "0.05",
            "--out",
            "run",
        ],
        dir.path(),
    ))
    .unwrap();
    let c = &manifest["config"];
    assert_eq!(c["mode"], "graphvat");
    assert_eq!(c["beta"], 0.3);
    assert_eq!(c["epsilon"], 0.05);
    assert_eq!(c["max_epochs"], 5);
    assert_eq!(c["alpha"], 0.01);

    fs::write(dir.path().join("bad.json"), r#"{"betta": 1}"#).unwrap();
    let out = graphat(
        &["train", "--dataset", "sbm6.json", "--config", "bad.json", "--out", "r2"],
        dir.path(),
    );
    assert!(!out.status.success());
}

#[test]
fn sweep_rows_follow_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "7");
    fs::write(dir.path().join("one.json"), "{}").unwrap();
    let single = ok(
        &[
            "sweep",
            "--dataset",
            "sbm7.json",
            "--grid",
            "one.json",
            "--mode",
            "graphat",
            "--max-epochs",
            "60",
        ],
        dir.path(),
    );
    let manifest: Value = serde_json::from_str(&ok(
        &[
            "train",
            "--dataset",
            "sbm7.json",
            "--mode",
            "graphat",
            "--max-epochs",
            "60",
            "--out",
            "run",
        ],
        dir.path(),
    ))
    .unwrap();
    let lines: Vec<&str> = single.lines().collect();
    assert_eq!(lines.len(), 2);
    let header: Vec<&str> = lines[0].split(',').collect();
    let row: Vec<&str> = lines[1].split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(
        col("best_epoch").parse::<u64>().unwrap(),
        manifest["best_epoch"].as_u64().unwrap()
    );
    assert_eq!(
        col("test_acc").parse::<f64>().unwrap(),
        manifest["test_accuracy"].as_f64().unwrap()
    );

    fs::write(
        dir.path().join("eps.json"),
        r#"{"epsilon": [0.01, 0.05, 0.1, 0.5, 1.0]}"#,
    )
    .unwrap();
    ok(
        &[
            "sweep",
            "--dataset",
            "sbm7.json",
            "--grid",
            "eps.json",
            "--mode",
            "graphat",
            "--beta",
            "1.0",
            "--k",
            "1",
            "--max-epochs",
            "40",
            "--jobs",
            "2",
            "--out",
            "eps.csv",
        ],
        dir.path(),
    );
    let csv = fs::read_to_string(dir.path().join("eps.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let beta = header.iter().position(|h| *h == "beta").unwrap();
    assert!(csv.lines().skip(1).all(|l| l.split(',').nth(beta) == Some("1.0")));
}
