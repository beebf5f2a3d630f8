//! Fast end-to-end checks of the command-line surface: exit codes and
//! emitted files, driven through the compiled binary.

use std::path::Path;
use std::process::Command;

fn famrisk() -> Command {
    Command::new(env!("CARGO_BIN_EXE_famrisk"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("exp.conf");
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = "[simulation]\n\
    h2 = 0.7\n\
    e2 = 0.3\n\
    prevalence = 0.1\n\
    gen_sizes = 200,200,800\n\
    [dataset]\n\
    channels = diagnosis\n\
    [model]\n\
    architecture = mlp_family_history\n\
    [train]\n\
    lr = 0.01\n\
    max_epochs = 2\n";

#[test]
fn unknown_config_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[simulation]\nh3 = 0.5\n");
    let out = famrisk()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("h3"), "stderr should name the bad key: {stderr}");
}

#[test]
fn invalid_value_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[split]\ntrain_frac = 1.5\n");
    let out = famrisk()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn training_the_rule_based_screen_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[model]\narchitecture = rule_based\n",
    );
    let out = famrisk()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_without_archive_fails() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = famrisk()
        .args(["evaluate", "--config"])
        .arg(&config)
        .args(["--seed", "3", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn simulate_emits_pedigree_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let out = famrisk()
        .args(["simulate", "--config"])
        .arg(&config)
        .args(["--seed", "3", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out_dir.join("pedigree.tsv").exists());
    assert!(out_dir.join("longitudinal.tsv").exists());
    assert!(out_dir.join("manifest.json").exists());
    let manifest = std::fs::read_to_string(out_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 3") || manifest.contains("\"seed\":3"));
}

#[test]
fn train_then_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out_dir = dir.path().join("out");
    let status = famrisk()
        .args(["train", "--config"])
        .arg(&config)
        .args(["--seed", "3", "--out"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert!(status.success());
    for name in ["model.json", "history.tsv", "predictions.tsv", "metrics.tsv"] {
        assert!(out_dir.join(name).exists(), "missing {name}");
    }
    let eval_dir = dir.path().join("eval");
    let status = famrisk()
        .args(["evaluate", "--config"])
        .arg(&config)
        .args(["--seed", "3", "--out"])
        .arg(&eval_dir)
        .args(["--model"])
        .arg(out_dir.join("model.json"))
        .status()
        .unwrap();
    assert!(status.success());
    assert!(eval_dir.join("metrics.tsv").exists());
}
