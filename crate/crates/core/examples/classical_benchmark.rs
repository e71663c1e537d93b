//! Runs the repeated benchmark for the classical classifiers on the
//! desk-scale dataset and prints the table.
//!
//! cargo run --release --example classical_benchmark -- [--full] [--quick]
//!
//! `--full` runs every published row instead of the four desk rows;
//! `--quick` caps the data and uses a single repeat.

use std::path::PathBuf;

use mnist_fraction::bench::{self, BenchConfig, CheckMode};
use mnist_fraction::dataset::{self, LabeledDataset, DEFAULT_RATIOS};
use mnist_fraction::generate::{self, GenerationConfig};
use mnist_fraction::idx::Mnist;

fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_FRACTION_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let full = args.iter().any(|a| a == "--full");
    let quick = args.iter().any(|a| a == "--quick");

    let mnist = Mnist::load_dir(&mnist_dir())?;
    let set = generate::generate_dataset(&GenerationConfig::desk(7), &mnist)?;
    let data = LabeledDataset::from_generated(&set);
    let split = dataset::stratified_split(&data.labels, DEFAULT_RATIOS, 7)?;

    let entries = if full { bench::table1() } else { bench::desk_checks() };
    let mut cfg = BenchConfig::new(entries, 42);
    if quick {
        cfg.repeats = 1;
        cfg.cap_train = Some(1100);
        cfg.cap_test = Some(330);
    }
    let result = bench::run_benchmark_with(&cfg, &data, &split, |e, r, acc| {
        eprintln!("{:<18} {:<40} repeat {} -> {acc:.4}", e.name, e.params, r + 1)
    })?;
    print!("{}", result.render());
    for line in result.check(CheckMode::Desk) {
        println!("{} {} {}: {:.4} (target {})", if line.pass { "PASS" } else { "FAIL" }, line.name, line.params, line.mean, line.target);
    }
    Ok(())
}
