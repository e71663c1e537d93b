//! Precision, recall and F1 from a confusion matrix, plus the matrix as a
//! heat-map image.
//!
//! cargo run --release --example metrics_report

use mnist_fraction::metrics;
use mnist_fraction::{idx, NUM_CLASSES};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // a classifier that confuses 1 with 7 and sometimes calls 7 a fraction
    let mut y_true = Vec::new();
    let mut y_pred = Vec::new();
    for c in 0..NUM_CLASSES as u8 {
        for k in 0..20u8 {
            y_true.push(c);
            y_pred.push(match (c, k) {
                (1, 0..=2) => 7,
                (7, 0) => 1,
                (7, 1) => 10,
                _ => c,
            });
        }
    }
    let cm = metrics::confusion(&y_true, &y_pred, NUM_CLASSES)?;
    let report = metrics::summarize(&cm);
    print!("{}", report.render());
    println!("accuracy == weighted recall: {}", (report.accuracy - report.weighted_avg.recall).abs() < 1e-12);

    let path = std::env::temp_dir().join("confusion.pgm");
    std::fs::write(&path, idx::write_pgm(&cm.heatmap(12)))?;
    println!("heat map {}", path.display());
    Ok(())
}
