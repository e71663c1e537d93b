//! Synthetic handwritten fractions built from MNIST digits.
//!
//! The crate covers the whole pipeline:
//!
//! * [`idx`] reads and writes the IDX containers MNIST ships in, plus PGM export.
//! * [`image`] is the grayscale raster and the handful of transforms the
//!   generator and the parser need.
//! * [`generate`] composes numerator, fraction bar and denominator into
//!   56×56 fraction images with exact ground truth.
//! * [`dataset`] assembles the 11-class dataset, splits it and augments it.
//! * [`classifiers`] holds the classical baselines (trees, forests, kNN,
//!   naive Bayes, linear SGD models) behind one fit/predict contract.
//! * [`cnn`] is the convolutional network, trained with hand-written backprop.
//! * [`parser`] turns a fraction image back into a numerator and denominator.
//! * [`metrics`] computes confusion matrices and precision/recall/F1 reports.
//! * [`bench`] runs the repeated classifier benchmark.

pub mod bench;
pub mod classifiers;
pub mod cnn;
pub mod dataset;
pub mod generate;
pub mod idx;
pub mod image;
pub mod metrics;
pub mod parser;
pub mod seed;

pub use crate::image::GrayImage;

/// Number of classes in the classification dataset: ten digits plus "fraction".
pub const NUM_CLASSES: usize = 11;

/// Class id used for every fraction sample.
pub const FRACTION_CLASS: u8 = 10;

/// Side length of the square canvas every dataset image lives on.
pub const CANVAS_SIDE: usize = 56;
