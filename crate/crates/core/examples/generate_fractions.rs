//! Generates a handful of fractions of each structure, prints their manifest
//! lines and writes the images as PGM.
//!
//! cargo run --release --example generate_fractions -- [OUT_DIR]

use std::path::PathBuf;

use mnist_fraction::generate::{self, GenerationConfig};
use mnist_fraction::idx::{self, Mnist};

fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_FRACTION_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(std::env::temp_dir).join("fractions");
    std::fs::create_dir_all(&out)?;
    let mnist = Mnist::load_dir(&mnist_dir())?;

    let cfg = GenerationConfig {
        f11: 3,
        f12: 3,
        f22: 3,
        master_seed: 2024,
        ..Default::default()
    };
    let set = generate::generate_dataset(&cfg, &mnist)?;
    for (img, rec) in set.images.iter().zip(&set.records) {
        let value = rec.value.as_deref().unwrap_or("?");
        let path = out.join(format!("{:02}_{}.pgm", rec.id, value.replace('/', "_over_")));
        std::fs::write(&path, idx::write_pgm(img))?;
        let layout = rec.layout.as_ref().expect("fractions carry a layout");
        println!(
            "{:?} {value:>6}  bar {:?}  exemplars {:?}",
            rec.structure.expect("fraction"),
            layout.to_canvas(&layout.bar),
            rec.exemplar_indices
        );
    }
    println!("images in {}", out.display());
    Ok(())
}
