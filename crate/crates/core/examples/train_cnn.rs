//! Trains the convolutional network on the desk-scale dataset, reports test
//! metrics and saves a checkpoint.
//!
//! cargo run --release --example train_cnn -- [--epochs N] [--cap N] [--out PATH]

use std::path::PathBuf;

use mnist_fraction::cnn::{self, Checkpoint, CnnArch, CnnParams, TrainHyper};
use mnist_fraction::dataset::{self, AugmentParams, LabeledDataset, DEFAULT_RATIOS};
use mnist_fraction::generate::{self, GenerationConfig};
use mnist_fraction::idx::Mnist;
use mnist_fraction::{bench, metrics, NUM_CLASSES};

fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_FRACTION_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn flag<T: std::str::FromStr>(args: &[String], name: &str) -> Option<T> {
    let i = args.iter().position(|a| a == name)?;
    args.get(i + 1)?.parse().ok()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let epochs = flag(&args, "--epochs").unwrap_or(15);
    let out: PathBuf = flag(&args, "--out").unwrap_or_else(|| std::env::temp_dir().join("desk.ckpt"));

    let mnist = Mnist::load_dir(&mnist_dir())?;
    let set = generate::generate_dataset(&GenerationConfig::desk(7), &mnist)?;
    let data = LabeledDataset::from_generated(&set);
    let mut split = dataset::stratified_split(&data.labels, DEFAULT_RATIOS, 7)?;
    if let Some(cap) = flag::<usize>(&args, "--cap") {
        split.train = bench::cap_indices(&split.train, &data.labels, cap)?;
        split.val = bench::cap_indices(&split.val, &data.labels, (cap / 4).max(NUM_CLASSES))?;
        split.test = bench::cap_indices(&split.test, &data.labels, (cap / 4).max(NUM_CLASSES))?;
    }

    let arch = CnnArch::standard();
    let hyper = TrainHyper {
        epochs,
        seed: 1,
        ..Default::default()
    };
    let aug = AugmentParams::default();
    let params = CnnParams::<f32>::init(&arch, hyper.seed)?;
    println!("{} parameters, {} training images", params.num_parameters(), split.train.len());

    let start = std::time::Instant::now();
    let (params, history) = cnn::train(params, &data, &split, &hyper, &aug, |r| {
        println!("epoch {:>2}  loss {:.4}  val {:.4}  ({:.0}s)", r.epoch, r.loss, r.val_accuracy, start.elapsed().as_secs_f64())
    })?;

    let (preds, acc) = cnn::evaluate(&params, &data, &split.test)?;
    let report = metrics::summarize(&metrics::confusion(&data.labels_at(&split.test), &preds, NUM_CLASSES)?);
    print!("{}", report.render());
    println!("test accuracy {acc:.4}");

    cnn::save_checkpoint(
        &out,
        &Checkpoint {
            params,
            hyper: Some(hyper),
            augment: Some(aug),
        },
    )?;
    std::fs::write(out.with_extension("history.jsonl"), cnn::history_jsonl(&history))?;
    println!("checkpoint {}", out.display());
    Ok(())
}
