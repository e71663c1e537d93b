//! Loads the MNIST IDX files, writes a slice back out as IDX, reads it again
//! and exports the first few digits as PGM.
//!
//! cargo run --release --example idx_roundtrip -- [OUT_DIR]

use std::path::PathBuf;

use mnist_fraction::idx::{self, IdxTensor, Mnist};

fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_FRACTION_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir).join("idx_roundtrip");
    std::fs::create_dir_all(&out)?;

    let mnist = Mnist::load_dir(&mnist_dir())?;
    println!("loaded {} digits", mnist.len());

    let head = &mnist.images[..100.min(mnist.len())];
    let tensor = IdxTensor::from_images(head)?;
    let bytes = idx::write_idx(&tensor);
    let back = idx::read_idx(&bytes)?;
    assert_eq!(back, tensor);
    assert_eq!(back.to_images()?, head);
    println!("{} images, dims {:?}, {} bytes: round trip exact", head.len(), back.dims(), bytes.len());

    for (i, (img, label)) in mnist.images.iter().zip(&mnist.labels).take(5).enumerate() {
        let path = out.join(format!("digit{i}_label{label}.pgm"));
        std::fs::write(&path, idx::write_pgm(img))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
