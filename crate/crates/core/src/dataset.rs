//! The 11-class dataset: assembly, stratified splitting and augmentation.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generate::{GeneratedSet, SampleRecord};
use crate::idx::{self, IdxError, IdxTensor};
use crate::image::GrayImage;
use crate::seed::{self, Rng};
use crate::NUM_CLASSES;

pub const IMAGES_FILE: &str = "images-idx3-ubyte";
pub const LABELS_FILE: &str = "labels-idx1-ubyte";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("class {class} has {count} samples, a three-way split needs at least 3")]
    ClassTooSmall { class: u8, count: usize },
    #[error("split ratios {0:?} must be non-negative and sum to 1")]
    InvalidRatios([f64; 3]),
    #[error("label {0} outside 0..{NUM_CLASSES}")]
    LabelOutOfRange(u8),
    #[error("{images} images but {labels} labels")]
    LengthMismatch { images: usize, labels: usize },
    #[error("augmentation ranges must lie in [0, 0.5]")]
    InvalidAugment,
    #[error(transparent)]
    Idx(#[from] IdxError),
    #[error("{0}")]
    Io(String),
}

/// Images and labels, aligned by index.
#[derive(Debug, Clone, Default)]
pub struct LabeledDataset {
    pub images: Vec<GrayImage>,
    pub labels: Vec<u8>,
}

impl LabeledDataset {
    pub fn new(images: Vec<GrayImage>, labels: Vec<u8>) -> Result<Self, DatasetError> {
        if images.len() != labels.len() {
            return Err(DatasetError::LengthMismatch {
                images: images.len(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(DatasetError::LabelOutOfRange(bad));
        }
        Ok(LabeledDataset { images, labels })
    }

    pub fn from_generated(set: &GeneratedSet) -> Self {
        LabeledDataset {
            images: set.images.clone(),
            labels: set.labels(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Flattened pixels scaled to `[0, 1]`, one row per requested index.
    pub fn features(&self, indices: &[usize]) -> Features {
        let dim = self.images.first().map_or(0, |i| i.pixels().len());
        let mut data = Vec::with_capacity(indices.len() * dim);
        for &i in indices {
            data.extend(self.images[i].pixels().iter().map(|&v| v as f32 / 255.0));
        }
        Features {
            rows: indices.len(),
            cols: dim,
            data,
        }
    }

    pub fn labels_at(&self, indices: &[usize]) -> Vec<u8> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Reads `images-idx3-ubyte` and `labels-idx1-ubyte` from `dir`.
    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let images = idx::read_idx_file(&dir.join(IMAGES_FILE))?.to_images()?;
        let labels = idx::read_idx_file(&dir.join(LABELS_FILE))?.into_data();
        Self::new(images, labels)
    }

    /// Writes the IDX pair; an empty dataset cannot be represented in IDX.
    pub fn save(&self, dir: &Path) -> Result<(), DatasetError> {
        idx::write_idx_file(&dir.join(IMAGES_FILE), &IdxTensor::from_images(&self.images)?)?;
        idx::write_idx_file(
            &dir.join(LABELS_FILE),
            &IdxTensor::new(vec![self.labels.len()], self.labels.clone())?,
        )?;
        Ok(())
    }
}

/// Writes a generated set as the IDX pair plus the JSON-lines manifest.
pub fn save_generated(set: &GeneratedSet, dir: &Path) -> Result<(), DatasetError> {
    std::fs::create_dir_all(dir).map_err(|e| DatasetError::Io(format!("{}: {e}", dir.display())))?;
    LabeledDataset::from_generated(set).save(dir)?;
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, set.manifest_jsonl()).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))
}

/// Reads the manifest written by [`save_generated`].
pub fn load_manifest(dir: &Path) -> Result<Vec<SampleRecord>, DatasetError> {
    let path = dir.join(MANIFEST_FILE);
    let text =
        std::fs::read_to_string(&path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map_err(|e| DatasetError::Io(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

/// Dense row-major `f32` feature matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Features {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl Features {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        assert_eq!(rows * cols, data.len(), "feature buffer size mismatch");
        Features { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn select(&self, indices: &[usize]) -> Features {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Features::new(indices.len(), self.cols, data)
    }
}

/// Disjoint train/val/test index lists, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl SplitIndices {
    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let json = serde_json::to_string(self).expect("split serializes");
        std::fs::write(path, json).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| DatasetError::Io(format!("{}: {e}", path.display())))
    }
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];

/// Largest-remainder apportionment of `n` items; remainder ties go to the
/// earlier part (train, then val, then test).
pub fn apportion(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    const EPS: f64 = 1e-9;
    let quotas = ratios.map(|r| n as f64 * r);
    let mut sizes = quotas.map(|q| (q + EPS).floor() as usize);
    let assigned: usize = sizes.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - sizes[a] as f64;
        let fb = quotas[b] - sizes[b] as f64;
        if (fa - fb).abs() <= EPS {
            a.cmp(&b)
        } else {
            fb.total_cmp(&fa)
        }
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        sizes[i] += 1;
    }
    sizes
}

/// Per class: shuffle the class's indices with a seeded RNG, then cut them by
/// [`apportion`].
pub fn stratified_split(labels: &[u8], ratios: [f64; 3], seed: u64) -> Result<SplitIndices, DatasetError> {
    if ratios.iter().any(|&r| !(0.0..=1.0).contains(&r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DatasetError::InvalidRatios(ratios));
    }
    let classes = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    let mut split = SplitIndices {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        seed,
    };
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 3 {
            return Err(DatasetError::ClassTooSmall {
                class: class as u8,
                count: members.len(),
            });
        }
        members.shuffle(&mut seed::child_rng(seed, class as u64));
        let [tr, va, _] = apportion(members.len(), ratios);
        split.train.extend_from_slice(&members[..tr]);
        split.val.extend_from_slice(&members[tr..tr + va]);
        split.test.extend_from_slice(&members[tr + va..]);
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();
    Ok(split)
}

/// Random zoom and shift ranges, all as fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Zoom factor drawn from `[1 - zoom, 1 + zoom]`.
    pub zoom_range: f64,
    /// Horizontal shift up to this fraction of the width.
    pub h_shift_max: f64,
    /// Vertical shift up to this fraction of the height.
    pub v_shift_max: f64,
    /// Intensity of vacated pixels.
    pub fill: u8,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            zoom_range: 0.05,
            h_shift_max: 0.05,
            v_shift_max: 0.05,
            fill: 255,
        }
    }
}

impl AugmentParams {
    pub fn none() -> Self {
        AugmentParams {
            zoom_range: 0.0,
            h_shift_max: 0.0,
            v_shift_max: 0.0,
            fill: 255,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let ok = |v: f64| (0.0..=0.5).contains(&v);
        if ok(self.zoom_range) && ok(self.h_shift_max) && ok(self.v_shift_max) {
            Ok(())
        } else {
            Err(DatasetError::InvalidAugment)
        }
    }
}

/// One concrete draw of the augmentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentDraw {
    pub zoom: f64,
    pub dx: i64,
    pub dy: i64,
}

impl AugmentDraw {
    pub fn sample(p: &AugmentParams, width: usize, height: usize, rng: &mut Rng) -> Self {
        let zoom = rng.gen_range(1.0 - p.zoom_range..=1.0 + p.zoom_range);
        let hx = p.h_shift_max * width as f64;
        let hy = p.v_shift_max * height as f64;
        let dx = rng.gen_range(-hx..=hx).round() as i64;
        let dy = rng.gen_range(-hy..=hy).round() as i64;
        AugmentDraw { zoom, dx, dy }
    }
}

/// Scales about the image center by `zoom`, then shifts by `(dx, dy)`.
/// Pixels that map outside the source take `fill`.
pub fn apply_augment(img: &GrayImage, draw: AugmentDraw, fill: u8) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut out = GrayImage::filled(w, h, fill);
    for y in 0..h {
        let sy = (y as f64 - draw.dy as f64 - cy) / draw.zoom + cy;
        if sy < -0.5 || sy > h as f64 - 0.5 {
            continue;
        }
        let sy = sy.clamp(0.0, (h - 1) as f64);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let fy = sy - y0 as f64;
        for x in 0..w {
            let sx = (x as f64 - draw.dx as f64 - cx) / draw.zoom + cx;
            if sx < -0.5 || sx > w as f64 - 0.5 {
                continue;
            }
            let sx = sx.clamp(0.0, (w - 1) as f64);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let fx = sx - x0 as f64;
            let top = img.get(x0, y0) as f64 * (1.0 - fx) + img.get(x1, y0) as f64 * fx;
            let bot = img.get(x0, y1) as f64 * (1.0 - fx) + img.get(x1, y1) as f64 * fx;
            out.set(x, y, (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// Draws zoom and shift from `p` and applies them.
pub fn augment(img: &GrayImage, p: &AugmentParams, rng: &mut Rng) -> GrayImage {
    let draw = AugmentDraw::sample(p, img.width(), img.height(), rng);
    apply_augment(img, draw, p.fill)
}
