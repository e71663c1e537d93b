//! Decodes freshly generated fractions back into numerator and denominator.
//!
//! Without a checkpoint the digit classifier is an oracle that knows the true
//! digits, which measures segmentation alone. With `--checkpoint` the
//! trained network reads the glyphs.
//!
//! cargo run --release --example parse_fractions -- [--count N] [--seed S] [--checkpoint PATH]

use std::path::PathBuf;

use mnist_fraction::cnn;
use mnist_fraction::generate::{self, GenerationConfig};
use mnist_fraction::idx::Mnist;
use mnist_fraction::parser::{self, CnnDigitClassifier, DigitClassifier, OracleClassifier};

fn mnist_dir() -> PathBuf {
    std::env::var_os("MNIST_FRACTION_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}

fn flag(args: &[String], name: &str) -> Option<String> {
    let i = args.iter().position(|a| a == name)?;
    args.get(i + 1).cloned()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let count: usize = flag(&args, "--count").map(|s| s.parse()).transpose()?.unwrap_or(300);
    let seed: u64 = flag(&args, "--seed").map(|s| s.parse()).transpose()?.unwrap_or(31);
    let params = flag(&args, "--checkpoint").map(|p| cnn::load_checkpoint(p).map(|c| c.params)).transpose()?;

    let mnist = Mnist::load_dir(&mnist_dir())?;
    let third = count.div_ceil(3);
    let cfg = GenerationConfig {
        f11: third,
        f12: third,
        f22: count - 2 * third.min(count / 2),
        master_seed: seed,
        ..Default::default()
    };
    let set = generate::generate_dataset(&cfg, &mnist)?;

    let mut exact = 0;
    for (i, (img, rec)) in set.images.iter().zip(&set.records).enumerate() {
        let (num, den) = rec.fraction_digits().expect("fraction sample");
        let oracle = OracleClassifier {
            labels: num.iter().chain(&den).copied().collect(),
        };
        let cnn_model = params.as_ref().map(|p| CnnDigitClassifier { params: p });
        let model: &dyn DigitClassifier = match &cnn_model {
            Some(m) => m,
            None => &oracle,
        };
        let truth = (rec.numerator.unwrap() as u64, rec.denominator.unwrap() as u64);
        let got = parser::decode_fraction(img, model);
        let ok = matches!(&got, Ok(r) if r.rational().map(|q| (q.numerator(), q.denominator())) == Some(truth));
        exact += ok as usize;
        if i < 8 || !ok && i < 40 {
            match &got {
                Ok(r) => println!("{:>6} -> {}", rec.value.as_deref().unwrap_or(""), r.to_json()),
                Err(e) => println!("{:>6} -> error: {e}", rec.value.as_deref().unwrap_or("")),
            }
        }
    }
    let who = if params.is_some() { "network" } else { "oracle" };
    println!("{who}: exact match {exact}/{} = {:.3}", set.images.len(), exact as f64 / set.images.len() as f64);
    Ok(())
}
