//! Builds the desk-scale 11-class dataset, splits it 70/15/15 and shows a
//! few augmented copies of one sample.
//!
//! cargo run --release --example split_and_augment

use std::path::PathBuf;

use mnist_fraction::dataset::{self, AugmentParams, LabeledDataset, DEFAULT_RATIOS};
use mnist_fraction::generate::{self, GenerationConfig};
use mnist_fraction::idx::{self, Mnist};
use mnist_fraction::{seed, NUM_CLASSES};

fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_FRACTION_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mnist = Mnist::load_dir(&mnist_dir())?;
    let set = generate::generate_dataset(&GenerationConfig::desk(7), &mnist)?;
    let data = LabeledDataset::from_generated(&set);
    let split = dataset::stratified_split(&data.labels, DEFAULT_RATIOS, 7)?;

    println!("class  train  val  test");
    for c in 0..NUM_CLASSES as u8 {
        let count = |ix: &[usize]| ix.iter().filter(|&&i| data.labels[i] == c).count();
        println!("{c:>5} {:>6} {:>4} {:>5}", count(&split.train), count(&split.val), count(&split.test));
    }
    println!("total {:>6} {:>4} {:>5}", split.train.len(), split.val.len(), split.test.len());

    let out = std::env::temp_dir().join("augment");
    std::fs::create_dir_all(&out)?;
    let sample = &data.images[split.train[0]];
    let params = AugmentParams::default();
    for k in 0..4 {
        let img = dataset::augment(sample, &params, &mut seed::child_rng(1, k));
        std::fs::write(out.join(format!("aug{k}.pgm")), idx::write_pgm(&img))?;
    }
    println!("augmented copies in {}", out.display());
    Ok(())
}
