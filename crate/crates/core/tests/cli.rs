//! End-to-end checks of the command-line interface: generate a dataset,
//! train a tiny baseline run, evaluate its checkpoint, and query the
//! policy simulator.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_subgraph-lab"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let config = serde_json::json!({
        "task": "classification",
        "t": 2,
        "data": {"n": 13, "skips": [3, 5], "subset_size": 1, "copies": 4},
        "network": {"selection_layers": 2, "prediction_layers": 2, "width": 4},
        "tau": 1.0,
        "logit_dropout": 0.0,
        "learning_rate": 0.01,
        "epochs": 3,
        "batch_size": 4,
        "seed": 7,
        "baseline": "full"
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

#[test]
fn generate_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("out");

    let generate = bin()
        .args(["generate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(generate.status.success(), "{}", String::from_utf8_lossy(&generate.stderr));
    let dataset_path = out.join("dataset.json");
    let dataset: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&dataset_path).unwrap()).unwrap();
    assert_eq!(dataset["classes"], serde_json::json!(2));
    assert_eq!(dataset["graphs"].as_array().unwrap().len(), 8);

    let train = bin()
        .args(["train", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(train.status.success(), "{}", String::from_utf8_lossy(&train.stderr));
    let run_dir = out.join("full-t2-seed7");
    assert!(run_dir.join("report.json").exists());
    assert!(run_dir.join("checkpoint.json").exists());
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv.starts_with("run_id,baseline,T,metric,coverage,seed"));
    assert!(csv.contains("full-t2-seed7,full,2,"));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["per_epoch_loss"].as_array().unwrap().len(), 3);
    assert!(report.get("wall_time_secs").is_none(), "wall time must stay out of reports");

    let eval = bin()
        .args(["eval", "--config"])
        .arg(&config)
        .arg("--checkpoint")
        .arg(run_dir.join("checkpoint.json"))
        .arg("--data")
        .arg(&dataset_path)
        .output()
        .unwrap();
    assert!(eval.status.success(), "{}", String::from_utf8_lossy(&eval.stderr));
    let stats: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&eval.stdout)).unwrap();
    assert!(stats["metric"].as_f64().unwrap() >= 0.0);
    assert_eq!(stats["examples"], serde_json::json!(8));
}

#[test]
fn policy_sim_reports_both_views() {
    let sim = bin()
        .args(["policy-sim", "--l", "2", "--n", "13", "--trials", "20000", "--seed", "3"])
        .output()
        .unwrap();
    assert!(sim.status.success());
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&sim.stdout)).unwrap();
    assert_eq!(report["exact_prob"], serde_json::json!(0.5));
    assert_eq!(report["exact_draws"], serde_json::json!(3.0));
    let mc_prob = report["mc_prob"].as_f64().unwrap();
    assert!((mc_prob - 0.5).abs() < 0.02);
    assert_eq!(report["trials"], serde_json::json!(20000));
}

#[test]
fn train_is_deterministic_across_invocations() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    for out in ["a", "b"] {
        let result = bin()
            .args(["train", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join(out))
            .output()
            .unwrap();
        assert!(result.status.success());
    }
    let report_a =
        std::fs::read(dir.path().join("a").join("full-t2-seed7").join("report.json")).unwrap();
    let report_b =
        std::fs::read(dir.path().join("b").join("full-t2-seed7").join("report.json")).unwrap();
    assert_eq!(report_a, report_b, "same config and seed must give identical reports");
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("out");
    let result = bin()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--seed", "11", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(result.status.success());
    assert!(out.join("full-t2-seed11").join("report.json").exists());
}

#[test]
fn verify_prints_a_table() {
    let result = bin().args(["verify", "--seed", "0"]).output().unwrap();
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("PASS"));
    assert!(stdout.contains("identification-coverage-equivalence"));
    assert!(!stdout.contains("FAIL"));
}
