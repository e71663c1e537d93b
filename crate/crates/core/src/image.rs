//! Grayscale rasters and the transforms used by the generator and the parser.
//!
//! Composition happens in MNIST polarity (bright strokes on black) and blends
//! with a per-pixel maximum, so overlapping strokes never darken each other.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImageError {
    #[error("invalid image dimensions {width}x{height} for {len} pixels")]
    InvalidDimensions {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("{src_w}x{src_h} image at ({x},{y}) does not fit a {dst_w}x{dst_h} canvas")]
    OutOfBounds {
        src_w: usize,
        src_h: usize,
        x: i64,
        y: i64,
        dst_w: usize,
        dst_h: usize,
    },
    #[error("cannot pad a {width}x{height} image into {target_w}x{target_h}")]
    TargetTooSmall {
        width: usize,
        height: usize,
        target_w: usize,
        target_h: usize,
    },
}

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl GrayImage {
    pub fn from_vec(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(ImageError::InvalidDimensions {
                width,
                height,
                len: pixels.len(),
            });
        }
        Ok(GrayImage {
            width,
            height,
            pixels,
        })
    }

    /// Panics on a zero dimension.
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        GrayImage {
            width,
            height,
            pixels: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Bounding box of pixels strictly above `floor`, if any.
    pub fn content_bbox(&self, floor: u8) -> Option<BBox> {
        let mut bbox: Option<BBox> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) > floor {
                    match bbox.as_mut() {
                        Some(b) => b.include(x, y),
                        None => bbox = Some(BBox::point(x, y)),
                    }
                }
            }
        }
        bbox
    }

    /// Copies the inclusive box out of the image.
    pub fn crop(&self, b: BBox) -> GrayImage {
        let (w, h) = (b.width(), b.height());
        let mut pixels = Vec::with_capacity(w * h);
        for y in b.y0..=b.y1 {
            pixels.extend_from_slice(&self.pixels[y * self.width + b.x0..=y * self.width + b.x1]);
        }
        GrayImage {
            width: w,
            height: h,
            pixels,
        }
    }

    pub fn count_nonzero(&self) -> usize {
        self.pixels.iter().filter(|&&p| p != 0).count()
    }
}

/// Inclusive pixel bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BBox {
    pub fn point(x: usize, y: usize) -> Self {
        BBox {
            x0: x,
            y0: y,
            x1: x,
            y1: y,
        }
    }

    pub fn width(&self) -> usize {
        self.x1 - self.x0 + 1
    }

    pub fn height(&self) -> usize {
        self.y1 - self.y0 + 1
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn include(&mut self, x: usize, y: usize) {
        self.x0 = self.x0.min(x);
        self.y0 = self.y0.min(y);
        self.x1 = self.x1.max(x);
        self.y1 = self.y1.max(y);
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    pub fn translate(&self, dx: usize, dy: usize) -> BBox {
        BBox {
            x0: self.x0 + dx,
            y0: self.y0 + dy,
            x1: self.x1 + dx,
            y1: self.y1 + dy,
        }
    }

    /// Intersection over union of the two pixel sets.
    pub fn iou(&self, other: &BBox) -> f64 {
        let ix0 = self.x0.max(other.x0);
        let iy0 = self.y0.max(other.y0);
        let ix1 = self.x1.min(other.x1);
        let iy1 = self.y1.min(other.y1);
        if ix0 > ix1 || iy0 > iy1 {
            return 0.0;
        }
        let inter = ((ix1 - ix0 + 1) * (iy1 - iy0 + 1)) as f64;
        inter / (self.area() as f64 + other.area() as f64 - inter)
    }
}

/// `v -> 255 - v` on every pixel.
pub fn invert(img: &GrayImage) -> GrayImage {
    GrayImage {
        width: img.width,
        height: img.height,
        pixels: img.pixels.iter().map(|&v| 255 - v).collect(),
    }
}

/// Swaps rows and columns.
pub fn transpose(img: &GrayImage) -> GrayImage {
    let mut pixels = Vec::with_capacity(img.pixels.len());
    for x in 0..img.width {
        for y in 0..img.height {
            pixels.push(img.get(x, y));
        }
    }
    GrayImage {
        width: img.height,
        height: img.width,
        pixels,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeMethod {
    Nearest,
    Bilinear,
}

/// Pixel-center aligned source coordinate for output index `i`.
#[inline]
fn source_coord(i: usize, src: usize, dst: usize) -> f64 {
    (i as f64 + 0.5) * src as f64 / dst as f64 - 0.5
}

/// Resizes with pixel-center alignment. Bilinear clamps at the edges.
pub fn resize(img: &GrayImage, new_w: usize, new_h: usize, method: ResizeMethod) -> GrayImage {
    assert!(new_w > 0 && new_h > 0, "resize target must be non-empty");
    if new_w == img.width && new_h == img.height {
        return img.clone();
    }
    let mut pixels = Vec::with_capacity(new_w * new_h);
    match method {
        ResizeMethod::Nearest => {
            let nearest = |i: usize, src: usize, dst: usize| {
                (((i as f64 + 0.5) * src as f64 / dst as f64).floor() as usize).min(src - 1)
            };
            let xs: Vec<usize> = (0..new_w).map(|x| nearest(x, img.width, new_w)).collect();
            for y in 0..new_h {
                let sy = nearest(y, img.height, new_h);
                for &sx in &xs {
                    pixels.push(img.get(sx, sy));
                }
            }
        }
        ResizeMethod::Bilinear => {
            let taps = |dst: usize, src: usize| -> Vec<(usize, usize, f64)> {
                (0..dst)
                    .map(|i| {
                        let s = source_coord(i, src, dst).clamp(0.0, (src - 1) as f64);
                        let i0 = s.floor() as usize;
                        let i1 = (i0 + 1).min(src - 1);
                        (i0, i1, s - i0 as f64)
                    })
                    .collect()
            };
            let xt = taps(new_w, img.width);
            let yt = taps(new_h, img.height);
            for &(y0, y1, fy) in &yt {
                for &(x0, x1, fx) in &xt {
                    let top = img.get(x0, y0) as f64 * (1.0 - fx) + img.get(x1, y0) as f64 * fx;
                    let bot = img.get(x0, y1) as f64 * (1.0 - fx) + img.get(x1, y1) as f64 * fx;
                    let v = top * (1.0 - fy) + bot * fy;
                    pixels.push(v.round().clamp(0.0, 255.0) as u8);
                }
            }
        }
    }
    GrayImage {
        width: new_w,
        height: new_h,
        pixels,
    }
}

fn check_fits(canvas: &GrayImage, src: &GrayImage, x: i64, y: i64) -> Result<(), ImageError> {
    if x < 0
        || y < 0
        || x as usize + src.width > canvas.width
        || y as usize + src.height > canvas.height
    {
        return Err(ImageError::OutOfBounds {
            src_w: src.width,
            src_h: src.height,
            x,
            y,
            dst_w: canvas.width,
            dst_h: canvas.height,
        });
    }
    Ok(())
}

/// In-place variant of [`paste_max`].
pub fn paste_max_into(canvas: &mut GrayImage, src: &GrayImage, x: i64, y: i64) -> Result<(), ImageError> {
    check_fits(canvas, src, x, y)?;
    let (x, y) = (x as usize, y as usize);
    for row in 0..src.height {
        let dst = &mut canvas.pixels[(y + row) * canvas.width + x..][..src.width];
        let s = &src.pixels[row * src.width..][..src.width];
        for (d, &v) in dst.iter_mut().zip(s) {
            *d = (*d).max(v);
        }
    }
    Ok(())
}

/// Blends `src` onto a copy of `canvas` at `(x, y)` with a per-pixel max.
pub fn paste_max(canvas: &GrayImage, src: &GrayImage, x: i64, y: i64) -> Result<GrayImage, ImageError> {
    let mut out = canvas.clone();
    paste_max_into(&mut out, src, x, y)?;
    Ok(out)
}

/// Offset that centers `inner` within `outer`, ties toward the top-left.
pub fn center_offset(inner: usize, outer: usize) -> usize {
    (outer - inner) / 2
}

/// Centers the image on a `target_w × target_h` canvas filled with `fill`.
pub fn pad_center(img: &GrayImage, target_w: usize, target_h: usize, fill: u8) -> Result<GrayImage, ImageError> {
    if target_w < img.width || target_h < img.height {
        return Err(ImageError::TargetTooSmall {
            width: img.width,
            height: img.height,
            target_w,
            target_h,
        });
    }
    let ox = center_offset(img.width, target_w);
    let oy = center_offset(img.height, target_h);
    let mut out = GrayImage::filled(target_w, target_h, fill);
    for row in 0..img.height {
        out.pixels[(oy + row) * target_w + ox..][..img.width]
            .copy_from_slice(&img.pixels[row * img.width..][..img.width]);
    }
    Ok(out)
}

/// Foreground mask of a dark-on-light image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Self {
        assert_eq!(bits.len(), width * height, "mask size mismatch");
        Mask {
            width,
            height,
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Foreground where intensity is strictly below `threshold`.
pub fn binarize(img: &GrayImage, threshold: u8) -> Mask {
    Mask {
        width: img.width,
        height: img.height,
        bits: img.pixels.iter().map(|&v| v < threshold).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub id: u32,
    pub bbox: BBox,
    pub pixel_count: usize,
    /// `(x̄, ȳ)`
    pub centroid: (f64, f64),
}

/// 8-connected foreground regions, sorted by centroid x, labelled `1..=n`.
#[derive(Debug, Clone)]
pub struct ComponentSet {
    pub width: usize,
    pub height: usize,
    /// Per-pixel component id, 0 for background.
    pub label_map: Vec<u32>,
    pub components: Vec<Component>,
}

impl ComponentSet {
    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.label_map[y * self.width + x]
    }

    pub fn get(&self, id: u32) -> Option<&Component> {
        self.components.get(id.checked_sub(1)? as usize)
    }
}

/// Labels 8-connected foreground regions of `mask`.
pub fn connected_components(mask: &Mask) -> ComponentSet {
    let (w, h) = (mask.width, mask.height);
    let mut provisional = vec![0u32; w * h];
    let mut raw: Vec<(BBox, usize, f64, f64)> = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !mask.bits[start] || provisional[start] != 0 {
            continue;
        }
        let id = raw.len() as u32 + 1;
        provisional[start] = id;
        stack.push(start);
        let mut bbox = BBox::point(start % w, start / w);
        let (mut count, mut sx, mut sy) = (0usize, 0.0f64, 0.0f64);
        while let Some(p) = stack.pop() {
            let (x, y) = (p % w, p / w);
            bbox.include(x, y);
            count += 1;
            sx += x as f64;
            sy += y as f64;
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let q = ny * w + nx;
                    if mask.bits[q] && provisional[q] == 0 {
                        provisional[q] = id;
                        stack.push(q);
                    }
                }
            }
        }
        raw.push((bbox, count, sx / count as f64, sy / count as f64));
    }

    // raster discovery order is the final tie-break after centroid x, y
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| {
        raw[a]
            .2
            .total_cmp(&raw[b].2)
            .then(raw[a].3.total_cmp(&raw[b].3))
            .then(a.cmp(&b))
    });
    let mut remap = vec![0u32; raw.len() + 1];
    let components = order
        .iter()
        .enumerate()
        .map(|(rank, &i)| {
            let id = rank as u32 + 1;
            remap[i + 1] = id;
            let (bbox, pixel_count, cx, cy) = raw[i];
            Component {
                id,
                bbox,
                pixel_count,
                centroid: (cx, cy),
            }
        })
        .collect();
    let label_map = provisional.into_iter().map(|l| remap[l as usize]).collect();
    ComponentSet {
        width: w,
        height: h,
        label_map,
        components,
    }
}
