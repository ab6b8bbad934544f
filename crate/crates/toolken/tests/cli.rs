//! End-to-end tests of the command-line driver: artifact layout, exit
//! codes, and determinism of generated data.

use std::path::Path;
use std::process::{Command, Output};

fn toolken(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toolken"))
        .arg("--out")
        .arg(dir)
        .args([
            "--set",
            "gen.train_size=60",
            "--set",
            "gen.test_size=10",
            "--set",
            "stage1.epochs=2",
            "--set",
            "stage2.epochs=2",
            "--set",
            "stage3.epochs=2",
        ])
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "command failed: {}\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_pipeline_produces_fixed_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for cmd in [
        "gen-data",
        "train-backbone",
        "train-toolkens",
        "mine",
        "train-rerank",
        "decode",
        "eval",
        "ablate",
        "report",
    ] {
        assert_ok(&toolken(dir, &[cmd]));
    }
    for artifact in [
        "corpus.train.jsonl",
        "corpus.test.jsonl",
        "registry.json",
        "vocab.json",
        "manifest.json",
        "ckpt.stage1.tkpl",
        "ckpt.stage2.tkpl",
        "ckpt.stage3.tkpl",
        "hardneg.json",
        "eval.json",
        "ablation.json",
        "report/table2.csv",
        "report/table3.csv",
        "report/summary.txt",
    ] {
        assert!(dir.join(artifact).exists(), "missing artifact {artifact}");
    }
    assert!(
        std::fs::read_dir(dir.join("traces")).unwrap().count() > 0,
        "no decode traces written"
    );
}

#[test]
fn gen_data_is_deterministic() {
    let read = |dir: &Path| {
        [
            "corpus.train.jsonl",
            "corpus.test.jsonl",
            "registry.json",
            "vocab.json",
        ]
        .map(|f| std::fs::read(dir.join(f)).unwrap())
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_ok(&toolken(a.path(), &["--seed", "7", "gen-data"]));
    assert_ok(&toolken(b.path(), &["--seed", "7", "gen-data"]));
    assert_eq!(read(a.path()), read(b.path()));

    let c = tempfile::tempdir().unwrap();
    assert_ok(&toolken(c.path(), &["--seed", "8", "gen-data"]));
    assert_ne!(read(a.path())[0], read(c.path())[0], "seed must matter");
}

#[test]
fn stage_order_violation_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    assert_ok(&toolken(tmp.path(), &["gen-data"]));
    // Skipping stage 1 is a validation error, not a crash.
    let out = toolken(tmp.path(), &["train-toolkens"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bad_config_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = toolken(tmp.path(), &["--set", "no.such.key=3", "gen-data"]);
    assert_eq!(out.status.code(), Some(1));
    let out = toolken(tmp.path(), &["--set", "stage1.epochs=zero", "gen-data"]);
    assert_eq!(out.status.code(), Some(1));
    let out = toolken(tmp.path(), &["--task", "poetry", "gen-data"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn config_file_with_cli_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    std::fs::write(&cfg, "gen.train_size = 40\ngen.test_size = 5\n# comment\nseed = 3\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_toolken"))
        .arg("--out")
        .arg(tmp.path())
        .arg("--config")
        .arg(&cfg)
        .args(["--set", "gen.test_size=6", "gen-data"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let test_lines = std::fs::read_to_string(tmp.path().join("corpus.test.jsonl"))
        .unwrap()
        .lines()
        .count();
    assert_eq!(test_lines, 6, "CLI --set must override the config file");
}

#[test]
fn report_requires_eval_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    assert_ok(&toolken(tmp.path(), &["gen-data"]));
    let out = toolken(tmp.path(), &["report"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("eval"), "error should name the missing stage: {err}");
}
