//! Fraction image synthesis.
//!
//! A fraction is laid out on a working canvas in MNIST polarity: the
//! numerator row of 28×28 exemplars, a bar made from a transposed "1", then
//! the denominator row. The working canvas is cropped to its content, scaled
//! into the output canvas, and inverted last so strokes end up black on white.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::idx::Mnist;
use crate::image::{self, BBox, GrayImage, ImageError, ResizeMethod};
use crate::seed::{self, Rng};
use crate::{CANVAS_SIDE, FRACTION_CLASS};

/// Side of an MNIST exemplar.
pub const DIGIT_SIDE: usize = 28;

/// Exemplars with fewer lit pixels cannot form a bar.
pub const MIN_BAR_STROKE_PIXELS: usize = 20;

/// Below this scale the glyphs become unreadable.
const MIN_LAYOUT_SCALE: f64 = 0.35;

/// Blank ring kept around the content inside the output canvas.
const CANVAS_MARGIN: usize = 2;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("invalid fraction spec: {0}")]
    InvalidSpec(String),
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
    #[error("digit pool has no exemplar for digit {0}")]
    PoolMissingDigit(u8),
    #[error("exemplar has {nonzero} lit pixels, a bar needs at least {MIN_BAR_STROKE_PIXELS}")]
    DegenerateExemplar { nonzero: usize },
    #[error("bar must be at least 8 wide and 4 thick, got {width}x{thickness}")]
    InvalidBarSize { width: usize, thickness: usize },
    #[error("{width}x{height} layout does not fit a {side}x{side} canvas")]
    LayoutOverflow {
        width: usize,
        height: usize,
        side: usize,
    },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Fraction shape: digits in the numerator over digits in the denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Structure {
    /// `a/b`
    F11,
    /// `a/bc`
    F12,
    /// `ab/cd`
    F22,
}

impl Structure {
    pub const ALL: [Structure; 3] = [Structure::F11, Structure::F12, Structure::F22];

    /// `(numerator digits, denominator digits)`
    pub fn arity(self) -> (usize, usize) {
        match self {
            Structure::F11 => (1, 1),
            Structure::F12 => (1, 2),
            Structure::F22 => (2, 2),
        }
    }

    pub fn notation(self) -> &'static str {
        match self {
            Structure::F11 => "a/b",
            Structure::F12 => "a/bc",
            Structure::F22 => "ab/cd",
        }
    }
}

/// Recipe for one fraction sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FractionSpec {
    pub structure: Structure,
    pub numerator_digits: Vec<u8>,
    pub denominator_digits: Vec<u8>,
    /// Gap between adjacent 28×28 cells of a two-digit part.
    pub spacing_px: usize,
    /// `(dx, dy)` applied to the numerator row.
    pub numerator_jitter: (i32, i32),
    /// `(dx, dy)` applied to the denominator row.
    pub denominator_jitter: (i32, i32),
    pub bar_overhang_px: usize,
    pub bar_thickness_px: usize,
    pub sample_seed: u64,
}

/// Positional value of a digit list, most significant first.
pub fn digits_value(digits: &[u8]) -> u32 {
    digits.iter().fold(0, |acc, &d| acc * 10 + d as u32)
}

impl FractionSpec {
    pub fn validate(&self) -> Result<(), GenerateError> {
        let (n, d) = self.structure.arity();
        if self.numerator_digits.len() != n || self.denominator_digits.len() != d {
            return Err(GenerateError::InvalidSpec(format!(
                "{:?} needs {n} numerator and {d} denominator digits",
                self.structure
            )));
        }
        if let Some(bad) = self
            .numerator_digits
            .iter()
            .chain(&self.denominator_digits)
            .find(|&&x| !(1..=9).contains(&x))
        {
            return Err(GenerateError::InvalidSpec(format!("digit {bad} outside 1..=9")));
        }
        Ok(())
    }

    pub fn numerator(&self) -> u32 {
        digits_value(&self.numerator_digits)
    }

    pub fn denominator(&self) -> u32 {
        digits_value(&self.denominator_digits)
    }

    /// Draws spacing, jitter and overhang for the given digits from `cfg`'s ranges.
    pub fn sample(
        structure: Structure,
        numerator_digits: Vec<u8>,
        denominator_digits: Vec<u8>,
        cfg: &GenerationConfig,
        sample_seed: u64,
        rng: &mut Rng,
    ) -> Self {
        let j = cfg.jitter_max_px as i32;
        let mut jitter = || (rng.gen_range(-j..=j), rng.gen_range(-j..=j));
        let numerator_jitter = jitter();
        let denominator_jitter = jitter();
        FractionSpec {
            structure,
            numerator_digits,
            denominator_digits,
            spacing_px: rng.gen_range(cfg.spacing_px.0..=cfg.spacing_px.1),
            numerator_jitter,
            denominator_jitter,
            bar_overhang_px: rng.gen_range(cfg.bar_overhang_px.0..=cfg.bar_overhang_px.1),
            bar_thickness_px: cfg.bar_thickness_px,
            sample_seed,
        }
    }
}

/// Where everything landed, for auditing and for locating parts in the output.
///
/// Boxes are stroke (nonzero pixel) boxes in working-canvas coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FractionLayout {
    #[serde(flatten)]
    pub spec: FractionSpec,
    pub working_size: (usize, usize),
    pub bar: BBox,
    pub numerator: Vec<BBox>,
    pub denominator: Vec<BBox>,
    /// Region of the working canvas that was scaled into the output.
    pub crop: BBox,
    /// Size of the scaled crop.
    pub scaled_size: (usize, usize),
    /// Top-left of the scaled crop inside the output canvas.
    pub offset: (usize, usize),
}

impl FractionLayout {
    /// Maps a working-canvas box into output-canvas pixels.
    pub fn to_canvas(&self, b: &BBox) -> BBox {
        let sx = self.scaled_size.0 as f64 / self.crop.width() as f64;
        let sy = self.scaled_size.1 as f64 / self.crop.height() as f64;
        let lo = |v: usize, origin: usize, s: f64, off: usize| ((v - origin) as f64 * s).floor() as usize + off;
        let hi = |v: usize, origin: usize, s: f64, off: usize, size: usize| {
            ((((v + 1 - origin) as f64 * s).ceil() as usize).clamp(1, size) - 1) + off
        };
        BBox {
            x0: lo(b.x0, self.crop.x0, sx, self.offset.0),
            y0: lo(b.y0, self.crop.y0, sy, self.offset.1),
            x1: hi(b.x1, self.crop.x0, sx, self.offset.0, self.scaled_size.0),
            y1: hi(b.y1, self.crop.y0, sy, self.offset.1, self.scaled_size.1),
        }
    }
}

/// Ground truth for one generated image; one manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: usize,
    #[serde(rename = "label")]
    pub class_label: u8,
    /// `None` for digit-only samples.
    pub structure: Option<Structure>,
    pub numerator: Option<u32>,
    pub denominator: Option<u32>,
    pub value: Option<String>,
    #[serde(rename = "exemplars")]
    pub exemplar_indices: Vec<usize>,
    pub layout: Option<FractionLayout>,
    #[serde(rename = "seed")]
    pub sample_seed: u64,
}

impl SampleRecord {
    /// Numerator digits then denominator digits, in reading order.
    pub fn fraction_digits(&self) -> Option<(Vec<u8>, Vec<u8>)> {
        let l = self.layout.as_ref()?;
        Some((l.spec.numerator_digits.clone(), l.spec.denominator_digits.clone()))
    }
}

/// MNIST exemplars grouped by label.
#[derive(Debug, Clone)]
pub struct DigitPool<'a> {
    images: &'a [GrayImage],
    by_label: [Vec<usize>; 10],
}

impl<'a> DigitPool<'a> {
    pub fn new(images: &'a [GrayImage], labels: &[u8]) -> Self {
        let mut by_label: [Vec<usize>; 10] = Default::default();
        for (i, &l) in labels.iter().enumerate() {
            if (l as usize) < 10 {
                by_label[l as usize].push(i);
            }
        }
        DigitPool { images, by_label }
    }

    pub fn from_mnist(m: &'a Mnist) -> Self {
        Self::new(&m.images, &m.labels)
    }

    pub fn indices(&self, digit: u8) -> &[usize] {
        &self.by_label[digit as usize]
    }

    pub fn image(&self, index: usize) -> &GrayImage {
        &self.images[index]
    }

    /// Uniform draw, with replacement, among exemplars of `digit`.
    pub fn choose(&self, digit: u8, rng: &mut Rng) -> Result<usize, GenerateError> {
        self.by_label[digit as usize]
            .choose(rng)
            .copied()
            .ok_or(GenerateError::PoolMissingDigit(digit))
    }
}

/// Turns an MNIST "1" into a horizontal bar of `bar_width × bar_thickness`.
///
/// The exemplar is transposed, trimmed to the columns its stroke occupies so
/// the stroke reaches both ends, then resized.
pub fn make_fraction_bar(
    one_exemplar: &GrayImage,
    bar_width: usize,
    bar_thickness: usize,
) -> Result<GrayImage, GenerateError> {
    if bar_width < 8 || bar_thickness < 4 {
        return Err(GenerateError::InvalidBarSize {
            width: bar_width,
            thickness: bar_thickness,
        });
    }
    let nonzero = one_exemplar.count_nonzero();
    if nonzero < MIN_BAR_STROKE_PIXELS {
        return Err(GenerateError::DegenerateExemplar { nonzero });
    }
    let t = image::transpose(one_exemplar);
    let content = t.content_bbox(0).expect("nonzero pixels exist");
    let trimmed = t.crop(BBox {
        x0: content.x0,
        y0: 0,
        x1: content.x1,
        y1: t.height() - 1,
    });
    Ok(image::resize(&trimmed, bar_width, bar_thickness, ResizeMethod::Bilinear))
}

fn row_width(digits: usize, spacing: usize) -> usize {
    digits * DIGIT_SIDE + digits.saturating_sub(1) * spacing
}

/// Renders one fraction. The returned record has `id` 0; datasets assign ids.
///
/// `rng` drives exemplar selection: numerator digits, then denominator
/// digits, then the "1" used for the bar.
pub fn generate_fraction(
    spec: &FractionSpec,
    pool: &DigitPool<'_>,
    canvas_side: usize,
    rng: &mut Rng,
) -> Result<(GrayImage, SampleRecord), GenerateError> {
    spec.validate()?;
    let mut exemplars = Vec::new();
    for &d in spec.numerator_digits.iter().chain(&spec.denominator_digits) {
        exemplars.push(pool.choose(d, rng)?);
    }
    let bar_index = pool.choose(1, rng)?;
    exemplars.push(bar_index);

    let (n_num, n_den) = spec.structure.arity();
    let num_w = row_width(n_num, spec.spacing_px);
    let den_w = row_width(n_den, spec.spacing_px);
    let bar_width = num_w.max(den_w) + 2 * spec.bar_overhang_px;
    let bar = make_fraction_bar(pool.image(bar_index), bar_width, spec.bar_thickness_px)?;

    let jitter = [
        spec.numerator_jitter.0,
        spec.numerator_jitter.1,
        spec.denominator_jitter.0,
        spec.denominator_jitter.1,
    ]
    .iter()
    .map(|v| v.unsigned_abs() as usize)
    .max()
    .unwrap_or(0);
    // a vertical gap wider than any jitter keeps rows clear of the bar
    let margin = jitter;
    let gap = jitter + 1;
    let work_w = bar_width + 2 * margin;
    let bar_y = margin + DIGIT_SIDE + gap;
    let den_y = bar_y + spec.bar_thickness_px + gap;
    let work_h = den_y + DIGIT_SIDE + margin;
    let mut work = GrayImage::filled(work_w, work_h, 0);

    image::paste_max_into(&mut work, &bar, margin as i64, bar_y as i64)?;
    let bar_box = bar
        .content_bbox(0)
        .expect("resized stroke is nonempty")
        .translate(margin, bar_y);

    let mut place_row = |digits: &[usize], row_w: usize, top: usize, (dx, dy): (i32, i32)| -> Result<Vec<BBox>, GenerateError> {
        let left = (margin + (bar_width - row_w) / 2) as i64 + dx as i64;
        let top = top as i64 + dy as i64;
        let mut boxes = Vec::with_capacity(digits.len());
        for (i, &idx) in digits.iter().enumerate() {
            let x = left + (i * (DIGIT_SIDE + spec.spacing_px)) as i64;
            let glyph = pool.image(idx);
            image::paste_max_into(&mut work, glyph, x, top)?;
            if let Some(b) = glyph.content_bbox(0) {
                boxes.push(b.translate(x as usize, top as usize));
            }
        }
        Ok(boxes)
    };
    let numerator = place_row(&exemplars[..n_num], num_w, margin, spec.numerator_jitter)?;
    let denominator = place_row(
        &exemplars[n_num..n_num + n_den],
        den_w,
        den_y,
        spec.denominator_jitter,
    )?;

    let content = work.content_bbox(0).expect("bar is always drawn");
    let crop = BBox {
        x0: content.x0.saturating_sub(CANVAS_MARGIN),
        y0: content.y0.saturating_sub(CANVAS_MARGIN),
        x1: (content.x1 + CANVAS_MARGIN).min(work_w - 1),
        y1: (content.y1 + CANVAS_MARGIN).min(work_h - 1),
    };
    let inner = canvas_side.saturating_sub(2 * CANVAS_MARGIN).max(1);
    let scale = (inner as f64 / crop.width() as f64)
        .min(inner as f64 / crop.height() as f64)
        .min(1.0);
    if scale < MIN_LAYOUT_SCALE {
        return Err(GenerateError::LayoutOverflow {
            width: crop.width(),
            height: crop.height(),
            side: canvas_side,
        });
    }
    let scaled_w = ((crop.width() as f64 * scale).round() as usize).clamp(1, inner);
    let scaled_h = ((crop.height() as f64 * scale).round() as usize).clamp(1, inner);
    let scaled = image::resize(&work.crop(crop), scaled_w, scaled_h, ResizeMethod::Bilinear);
    let framed = image::pad_center(&scaled, canvas_side, canvas_side, 0)?;
    let out = image::invert(&framed);

    let (num, den) = (spec.numerator(), spec.denominator());
    let layout = FractionLayout {
        spec: spec.clone(),
        working_size: (work_w, work_h),
        bar: bar_box,
        numerator,
        denominator,
        crop,
        scaled_size: (scaled_w, scaled_h),
        offset: (
            image::center_offset(scaled_w, canvas_side),
            image::center_offset(scaled_h, canvas_side),
        ),
    };
    let record = SampleRecord {
        id: 0,
        class_label: FRACTION_CLASS,
        structure: Some(spec.structure),
        numerator: Some(num),
        denominator: Some(den),
        value: Some(format!("{num}/{den}")),
        exemplar_indices: exemplars,
        layout: Some(layout),
        sample_seed: spec.sample_seed,
    };
    Ok((out, record))
}

/// Pads an MNIST digit onto the canvas and inverts it.
pub fn render_digit(digit: &GrayImage, canvas_side: usize) -> Result<GrayImage, GenerateError> {
    Ok(image::invert(&image::pad_center(digit, canvas_side, canvas_side, 0)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Digit-only samples for each class 0..=9.
    pub digits_per_class: usize,
    pub f11: usize,
    pub f12: usize,
    pub f22: usize,
    /// Cycle `a/b` samples through all 81 digit pairs instead of drawing them.
    pub exhaustive_f11: bool,
    pub master_seed: u64,
    pub canvas_side: usize,
    /// Inclusive range.
    pub spacing_px: (usize, usize),
    pub jitter_max_px: u32,
    pub bar_thickness_px: usize,
    /// Inclusive range.
    pub bar_overhang_px: (usize, usize),
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            digits_per_class: 0,
            f11: 0,
            f12: 0,
            f22: 0,
            exhaustive_f11: true,
            master_seed: 0,
            canvas_side: CANVAS_SIDE,
            spacing_px: (2, 6),
            jitter_max_px: 2,
            bar_thickness_px: 14,
            bar_overhang_px: (2, 5),
        }
    }
}

impl GenerationConfig {
    /// 1,000 samples per class: the desk-scale benchmark set.
    pub fn desk(master_seed: u64) -> Self {
        GenerationConfig {
            digits_per_class: 1000,
            f11: 334,
            f12: 333,
            f22: 333,
            master_seed,
            ..Default::default()
        }
    }

    /// 103,080 samples whose stratified 70% train split holds 72,159 images.
    pub fn paper_scale(master_seed: u64) -> Self {
        GenerationConfig {
            digits_per_class: 9371,
            f11: 3124,
            f12: 3123,
            f22: 3123,
            master_seed,
            ..Default::default()
        }
    }

    pub fn fraction_count(&self) -> usize {
        self.f11 + self.f12 + self.f22
    }

    pub fn total(&self) -> usize {
        10 * self.digits_per_class + self.fraction_count()
    }

    pub fn validate(&self) -> Result<(), GenerateError> {
        let bad = |m: String| Err(GenerateError::InvalidConfig(m));
        if self.canvas_side < 40 {
            return bad(format!("canvas side {} is below 40", self.canvas_side));
        }
        if self.spacing_px.0 > self.spacing_px.1 || self.bar_overhang_px.0 > self.bar_overhang_px.1 {
            return bad("empty spacing or overhang range".into());
        }
        if self.bar_thickness_px < 4 {
            return bad("bar thickness below 4".into());
        }
        Ok(())
    }

    /// What sample `k` is: a digit-only sample of some class or a fraction.
    fn slot(&self, k: usize) -> Slot {
        let digits = 10 * self.digits_per_class;
        if k < digits {
            return Slot::Digit {
                class: (k / self.digits_per_class) as u8,
                rank: k % self.digits_per_class,
            };
        }
        let j = k - digits;
        if j < self.f11 {
            Slot::Fraction(Structure::F11, j)
        } else if j < self.f11 + self.f12 {
            Slot::Fraction(Structure::F12, j - self.f11)
        } else {
            Slot::Fraction(Structure::F22, j - self.f11 - self.f12)
        }
    }
}

enum Slot {
    Digit { class: u8, rank: usize },
    Fraction(Structure, usize),
}

/// Images plus their manifest, aligned by index.
#[derive(Debug, Clone, Default)]
pub struct GeneratedSet {
    pub images: Vec<GrayImage>,
    pub records: Vec<SampleRecord>,
}

impl GeneratedSet {
    pub fn labels(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.class_label).collect()
    }

    /// JSON-lines manifest.
    pub fn manifest_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn class_histogram(&self) -> HashMap<u8, usize> {
        let mut h = HashMap::new();
        for r in &self.records {
            *h.entry(r.class_label).or_default() += 1;
        }
        h
    }
}

fn random_digits(n: usize, rng: &mut Rng) -> Vec<u8> {
    (0..n).map(|_| rng.gen_range(1..=9)).collect()
}

/// Generates every sample the config asks for.
///
/// Sample `k` depends only on `(config, mnist, k)`, so the result is the same
/// under any thread count. Digit-only samples of class `c` walk a seeded
/// permutation of that class's exemplars, reusing it only once it runs out.
pub fn generate_dataset(config: &GenerationConfig, mnist: &Mnist) -> Result<GeneratedSet, GenerateError> {
    config.validate()?;
    let pool = DigitPool::from_mnist(mnist);
    let master = config.master_seed;
    let mut orders: Vec<Vec<usize>> = Vec::with_capacity(10);
    for c in 0..10u8 {
        let mut idx = pool.indices(c).to_vec();
        if config.digits_per_class > 0 && idx.is_empty() {
            return Err(GenerateError::PoolMissingDigit(c));
        }
        idx.shuffle(&mut seed::child_rng(seed::derive_seed(master, u64::MAX), c as u64));
        orders.push(idx);
    }

    let make = |k: usize| -> Result<(GrayImage, SampleRecord), GenerateError> {
        let sample_seed = seed::derive_seed(master, k as u64);
        let mut rng = seed::rng(sample_seed);
        let (img, mut record) = match config.slot(k) {
            Slot::Digit { class, rank } => {
                let order = &orders[class as usize];
                let index = order[rank % order.len()];
                let img = render_digit(pool.image(index), config.canvas_side)?;
                let record = SampleRecord {
                    id: 0,
                    class_label: class,
                    structure: None,
                    numerator: None,
                    denominator: None,
                    value: None,
                    exemplar_indices: vec![index],
                    layout: None,
                    sample_seed,
                };
                (img, record)
            }
            Slot::Fraction(structure, j) => {
                let (n, d) = structure.arity();
                let (num, den) = if structure == Structure::F11 && config.exhaustive_f11 {
                    let pair = j % 81;
                    (vec![1 + (pair / 9) as u8], vec![1 + (pair % 9) as u8])
                } else {
                    (random_digits(n, &mut rng), random_digits(d, &mut rng))
                };
                let spec = FractionSpec::sample(structure, num, den, config, sample_seed, &mut rng);
                generate_fraction(&spec, &pool, config.canvas_side, &mut rng)?
            }
        };
        record.id = k;
        Ok((img, record))
    };

    let results: Vec<_> = (0..config.total()).into_par_iter().map(make).collect();
    let mut set = GeneratedSet {
        images: Vec::with_capacity(results.len()),
        records: Vec::with_capacity(results.len()),
    };
    for r in results {
        let (img, rec) = r?;
        set.images.push(img);
        set.records.push(rec);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Ten synthetic exemplars per digit: a vertical stroke whose column
    /// encodes the digit, so tests can tell exemplars apart.
    pub(crate) fn synthetic_mnist() -> Mnist {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for d in 0..10u8 {
            for v in 0..10u8 {
                let mut img = GrayImage::filled(28, 28, 0);
                for y in 4..24 {
                    for x in 10 + d as usize / 2..14 + d as usize / 2 {
                        img.set(x, y, 200 + v * 5);
                    }
                }
                images.push(img);
                labels.push(d);
            }
        }
        Mnist { images, labels }
    }

    fn spec(structure: Structure, num: &[u8], den: &[u8]) -> FractionSpec {
        FractionSpec {
            structure,
            numerator_digits: num.to_vec(),
            denominator_digits: den.to_vec(),
            spacing_px: 4,
            numerator_jitter: (1, -2),
            denominator_jitter: (-2, 2),
            bar_overhang_px: 3,
            bar_thickness_px: 14,
            sample_seed: 5,
        }
    }

    #[test]
    fn full_height_column_becomes_full_width_bar() {
        let mut one = GrayImage::filled(28, 28, 0);
        for y in 0..28 {
            one.set(14, y, 255);
        }
        let bar = make_fraction_bar(&one, 40, 14).unwrap();
        assert_eq!((bar.width(), bar.height()), (40, 14));
        let b = bar.content_bbox(0).unwrap();
        assert_eq!((b.x0, b.x1), (0, 39));

        let same = make_fraction_bar(&one, 28, 28).unwrap();
        assert_eq!(same, image::transpose(&one));
    }

    #[test]
    fn bar_rejects_degenerate_inputs() {
        let mut speck = GrayImage::filled(28, 28, 0);
        speck.set(3, 3, 255);
        assert!(matches!(
            make_fraction_bar(&speck, 40, 14),
            Err(GenerateError::DegenerateExemplar { nonzero: 1 })
        ));
        let one = GrayImage::filled(28, 28, 255);
        assert!(matches!(
            make_fraction_bar(&one, 7, 14),
            Err(GenerateError::InvalidBarSize { .. })
        ));
    }

    #[test]
    fn record_carries_ground_truth() {
        let m = synthetic_mnist();
        let pool = DigitPool::from_mnist(&m);
        let (img, rec) =
            generate_fraction(&spec(Structure::F11, &[3], &[4]), &pool, 56, &mut seed::rng(1)).unwrap();
        assert_eq!((img.width(), img.height()), (56, 56));
        assert_eq!(rec.numerator, Some(3));
        assert_eq!(rec.denominator, Some(4));
        assert_eq!(rec.value.as_deref(), Some("3/4"));
        assert_eq!(rec.class_label, 10);
        assert_eq!(rec.exemplar_indices.len(), 3);
        assert_eq!(m.labels[rec.exemplar_indices[2]], 1);

        let (_, rec) = generate_fraction(
            &spec(Structure::F22, &[1, 2], &[3, 4]),
            &pool,
            56,
            &mut seed::rng(1),
        )
        .unwrap();
        assert_eq!(rec.numerator, Some(12));
        assert_eq!(rec.denominator, Some(34));
    }

    #[test]
    fn same_seed_same_pixels() {
        let m = synthetic_mnist();
        let pool = DigitPool::from_mnist(&m);
        let s = spec(Structure::F12, &[7], &[8, 9]);
        let a = generate_fraction(&s, &pool, 56, &mut seed::rng(11)).unwrap();
        let b = generate_fraction(&s, &pool, 56, &mut seed::rng(11)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn spec_validation() {
        let m = synthetic_mnist();
        let pool = DigitPool::from_mnist(&m);
        let bad = spec(Structure::F11, &[0], &[4]);
        assert!(matches!(
            generate_fraction(&bad, &pool, 56, &mut seed::rng(0)),
            Err(GenerateError::InvalidSpec(_))
        ));
        let bad = spec(Structure::F22, &[1], &[4]);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn missing_digit_is_reported() {
        let m = synthetic_mnist();
        let keep: Vec<usize> = (0..m.len()).filter(|&i| m.labels[i] != 6).collect();
        let images: Vec<_> = keep.iter().map(|&i| m.images[i].clone()).collect();
        let labels: Vec<_> = keep.iter().map(|&i| m.labels[i]).collect();
        let pool = DigitPool::new(&images, &labels);
        assert!(matches!(
            generate_fraction(&spec(Structure::F11, &[6], &[4]), &pool, 56, &mut seed::rng(0)),
            Err(GenerateError::PoolMissingDigit(6))
        ));
    }

    #[test]
    fn layout_overflow_for_tiny_canvas() {
        let m = synthetic_mnist();
        let pool = DigitPool::from_mnist(&m);
        let r = generate_fraction(&spec(Structure::F22, &[1, 2], &[3, 4]), &pool, 20, &mut seed::rng(0));
        assert!(matches!(r, Err(GenerateError::LayoutOverflow { .. })));
    }

    #[test]
    fn empty_config_gives_empty_dataset() {
        let set = generate_dataset(&GenerationConfig::default(), &synthetic_mnist()).unwrap();
        assert!(set.images.is_empty());
        assert!(set.manifest_jsonl().is_empty());
    }

    #[test]
    fn counts_and_histogram() {
        let cfg = GenerationConfig {
            digits_per_class: 100,
            f11: 34,
            f12: 33,
            f22: 33,
            master_seed: 3,
            ..Default::default()
        };
        let set = generate_dataset(&cfg, &synthetic_mnist()).unwrap();
        assert_eq!(set.images.len(), 1100);
        let h = set.class_histogram();
        for c in 0..=10u8 {
            assert_eq!(h[&c], 100, "class {c}");
        }
        for (i, r) in set.records.iter().enumerate() {
            assert_eq!(r.id, i);
        }
    }

    #[test]
    fn exhaustive_mode_covers_all_pairs() {
        let cfg = GenerationConfig {
            f11: 81,
            master_seed: 9,
            ..Default::default()
        };
        let set = generate_dataset(&cfg, &synthetic_mnist()).unwrap();
        let pairs: std::collections::HashSet<_> = set
            .records
            .iter()
            .map(|r| (r.numerator.unwrap(), r.denominator.unwrap()))
            .collect();
        assert_eq!(pairs.len(), 81);
    }

    #[test]
    fn borders_are_white() {
        let cfg = GenerationConfig {
            digits_per_class: 2,
            f11: 5,
            f12: 5,
            f22: 5,
            ..Default::default()
        };
        let set = generate_dataset(&cfg, &synthetic_mnist()).unwrap();
        for img in &set.images {
            let s = img.width();
            for i in 0..s {
                assert_eq!(img.get(i, 0), 255);
                assert_eq!(img.get(i, s - 1), 255);
                assert_eq!(img.get(0, i), 255);
                assert_eq!(img.get(s - 1, i), 255);
            }
        }
    }

    #[test]
    fn manifest_keys_are_stable() {
        let cfg = GenerationConfig {
            digits_per_class: 1,
            f22: 1,
            ..Default::default()
        };
        let set = generate_dataset(&cfg, &synthetic_mnist()).unwrap();
        let lines: Vec<serde_json::Value> = set
            .manifest_jsonl()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        for key in ["id", "label", "structure", "numerator", "denominator", "value", "exemplars", "layout", "seed"] {
            assert!(lines[0].get(key).is_some(), "missing {key}");
        }
        assert_eq!(lines[10]["structure"], "F22");
        assert!(lines[0]["structure"].is_null());
        let back: SampleRecord = serde_json::from_value(lines[10].clone()).unwrap();
        assert_eq!(back, set.records[10]);
    }

    #[test]
    fn paper_preset_totals() {
        let cfg = GenerationConfig::paper_scale(0);
        assert_eq!(cfg.total(), 103_080);
        assert_eq!(GenerationConfig::desk(0).total(), 11_000);
    }
}
