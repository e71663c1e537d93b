//! Compares backprop with central finite differences on a freshly
//! initialised reduced network, in double precision.
//!
//! cargo run --release --example gradient_check -- [INPUT_SIDE]

use mnist_fraction::cnn::{self, CnnArch};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let side = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(56);
    let arch = CnnArch::reduced(side);
    let start = std::time::Instant::now();
    let report = cnn::grad_check(&arch, 1e-5, 7)?;
    println!("architecture   {side}x{side} input, filters {:?}, dense {:?}", arch.filters, arch.dense);
    println!("checked        {}", report.checked);
    println!("skipped        {} (probe crossed a ReLU or pooling switch)", report.skipped);
    println!("max rel error  {:.3e}", report.max_rel_error);
    if let Some((name, i)) = &report.worst {
        println!("worst at       {name}[{i}]");
    }
    println!("elapsed        {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}
