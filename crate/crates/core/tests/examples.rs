//! Runs every example in its quick configuration.
//!
//! `cargo test` builds the examples next to the test binaries; when a test
//! is run on its own (`--test examples`) they may be missing, and the
//! affected cases say so instead of failing.

use std::path::PathBuf;
use std::process::Command;

fn example(name: &str) -> Option<Command> {
    let exe = std::env::current_exe().ok()?;
    let dir = exe.parent()?.parent()?.join("examples");
    let path = dir.join(format!("{name}{}", std::env::consts::EXE_SUFFIX));
    if !path.exists() {
        eprintln!("skipping {name}: {} not built", path.display());
        return None;
    }
    let mut c = Command::new(path);
    c.env(
        "MNIST_FRACTION_DATA",
        std::env::var_os("MNIST_FRACTION_DATA")
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")),
    );
    Some(c)
}

fn run(name: &str, args: &[&str], expect: &str) {
    let Some(mut cmd) = example(name) else { return };
    let out = cmd.args(args).output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{name} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains(expect), "{name} printed:\n{stdout}");
}

#[test]
fn idx_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    run("idx_roundtrip", &[dir.path().to_str().unwrap()], "round trip exact");
}

#[test]
fn generate_fractions() {
    let dir = tempfile::tempdir().unwrap();
    run("generate_fractions", &[dir.path().to_str().unwrap()], "F22");
}

#[test]
fn split_and_augment() {
    run("split_and_augment", &[], "total   7700 1650  1650");
}

#[test]
fn classical_benchmark() {
    run("classical_benchmark", &["--quick"], "KNeighbors");
}

#[test]
fn train_cnn() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("net.ckpt");
    run("train_cnn", &["--epochs", "1", "--cap", "220", "--out", ckpt.to_str().unwrap()], "test accuracy");
    if example("train_cnn").is_some() {
        assert!(ckpt.exists());
        run("parse_fractions", &["--count", "12", "--checkpoint", ckpt.to_str().unwrap()], "network: exact match");
    }
}

#[test]
fn gradient_check() {
    run("gradient_check", &["16"], "max rel error");
}

#[test]
fn parse_fractions() {
    run("parse_fractions", &["--count", "60"], "oracle: exact match");
}

#[test]
fn metrics_report() {
    run("metrics_report", &[], "accuracy == weighted recall: true");
}
