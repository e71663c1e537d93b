//! Reads a fraction image back into numbers.
//!
//! The pipeline is fixed and RNG-free: find the bar, sort the remaining ink
//! into numerator and denominator rows, cut each row into glyphs, normalise
//! every glyph the way MNIST digits are normalised, classify, and assemble
//! the digits positionally.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnn::{self, CnnParams};
use crate::generate::render_digit;
use crate::image::{self, binarize, connected_components, BBox, ComponentSet, GrayImage, ResizeMethod};

/// Pixels darker than this are ink.
pub const INK_THRESHOLD: u8 = 128;
pub const BAR_MIN_ASPECT: f64 = 2.5;
/// Just above 20/56: an MNIST digit (20 px box) centred on the 56 px canvas
/// can never be this wide, while the narrowest generated bars are 21 px.
pub const BAR_MIN_WIDTH_FRACTION: f64 = 0.36;
/// Glyph groups wider than this multiple of their height get split.
pub const TOUCHING_ASPECT: f64 = 1.6;
/// Side of a normalised glyph, and of the box its ink is scaled into.
pub const GLYPH_SIDE: usize = 28;
pub const GLYPH_BOX: usize = 20;
/// Lighter ink threshold for a second bar search. A bar squeezed out of a
/// thin "1" often survives only as anti-aliased grey and breaks apart at
/// [`INK_THRESHOLD`].
pub const BAR_FALLBACK_THRESHOLD: u8 = 224;
/// Components smaller than this are specks, unless nothing else is there.
const MIN_COMPONENT_PIXELS: usize = 3;
/// A glyph needs at least `1 / SPECK_RATIO` of the row's largest ink mass.
const SPECK_RATIO: usize = 10;
const MAX_SPLIT_DEPTH: usize = 3;
/// Rows or columns of grey fringe added around a bar core, per side.
const FRINGE_STEPS: usize = 2;
/// Empty columns bridged when grouping a row.
pub const MERGE_GAP: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("image contains no ink")]
    NoContent,
    #[error("nothing above the fraction bar")]
    EmptyNumerator,
    #[error("nothing below the fraction bar")]
    EmptyDenominator,
    #[error("component at {0:?} sits level with the fraction bar")]
    AmbiguousComponent(BBox),
    #[error("decoded denominator is 0")]
    ZeroDenominator,
    #[error("decoded number does not fit in 64 bits")]
    Overflow,
    #[error("classifier: {0}")]
    Classifier(String),
}

/// A fraction exactly as written: `3/6` stays `3/6`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rational {
    numerator: u64,
    denominator: u64,
}

impl Rational {
    pub fn new(numerator: u64, denominator: u64) -> Result<Self, ParseError> {
        if denominator == 0 {
            return Err(ParseError::ZeroDenominator);
        }
        Ok(Rational {
            numerator,
            denominator,
        })
    }

    pub fn numerator(&self) -> u64 {
        self.numerator
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    pub fn value(&self) -> f64 {
        self.numerator as f64 / self.denominator as f64
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

/// One cut-out character.
#[derive(Debug, Clone, PartialEq)]
pub struct Glyph {
    /// Stroke box in the source image.
    pub bbox: BBox,
    /// 28×28, bright ink on black, ink scaled into the central 20×20 box.
    pub image: GrayImage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub numerator: Vec<Glyph>,
    pub denominator: Vec<Glyph>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ParseKind {
    Fraction {
        value: Rational,
        numerator_confidences: Vec<f32>,
        denominator_confidences: Vec<f32>,
    },
    Digit {
        label: u8,
        confidence: f32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseResult {
    #[serde(flatten)]
    pub kind: ParseKind,
    pub bar: Option<BBox>,
    /// Glyph boxes in reading order: numerator, then denominator.
    pub glyphs: Vec<BBox>,
}

impl ParseResult {
    pub fn rational(&self) -> Option<Rational> {
        match self.kind {
            ParseKind::Fraction { value, .. } => Some(value),
            ParseKind::Digit { .. } => None,
        }
    }

    /// The flat JSON object the command line prints per image.
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::json;
        match &self.kind {
            ParseKind::Fraction {
                value,
                numerator_confidences,
                denominator_confidences,
            } => json!({
                "kind": "fraction",
                "numerator": value.numerator(),
                "denominator": value.denominator(),
                "value": value.value(),
                "confidences": numerator_confidences.iter().chain(denominator_confidences).collect::<Vec<_>>(),
                "bboxes": { "bar": self.bar, "glyphs": self.glyphs },
            }),
            ParseKind::Digit { label, confidence } => json!({
                "kind": "digit",
                "numerator": label,
                "denominator": 1,
                "value": *label as f64,
                "confidences": [confidence],
                "bboxes": { "bar": null, "glyphs": self.glyphs },
            }),
        }
    }
}

/// Anything that scores normalised glyphs. Each returned row holds at least
/// ten scores; only the first ten (digits 0 to 9) are consulted.
pub trait DigitClassifier {
    fn digit_scores(&self, glyphs: &[GrayImage]) -> Result<Vec<Vec<f32>>, ParseError>;
}

/// Wraps a trained network: each glyph is placed on the network's canvas
/// exactly as a digit-only dataset sample is, and the probabilities are
/// averaged over the glyph and its four one-pixel shifts.
pub struct CnnDigitClassifier<'a> {
    pub params: &'a CnnParams<f32>,
}

/// Offsets averaged over by [`CnnDigitClassifier`].
pub const GLYPH_SHIFTS: [(i64, i64); 5] = [(0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)];

fn shifted(glyph: &GrayImage, dx: i64, dy: i64) -> GrayImage {
    let (w, h) = (glyph.width() as i64, glyph.height() as i64);
    let mut out = GrayImage::filled(glyph.width(), glyph.height(), 0);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = (x - dx, y - dy);
            if (0..w).contains(&sx) && (0..h).contains(&sy) {
                out.set(x as usize, y as usize, glyph.get(sx as usize, sy as usize));
            }
        }
    }
    out
}

impl DigitClassifier for CnnDigitClassifier<'_> {
    fn digit_scores(&self, glyphs: &[GrayImage]) -> Result<Vec<Vec<f32>>, ParseError> {
        let side = self.params.arch.input_side;
        let canvases = glyphs
            .iter()
            .flat_map(|g| GLYPH_SHIFTS.iter().map(move |&(dx, dy)| render_digit(&shifted(g, dx, dy), side)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| ParseError::Classifier(e.to_string()))?;
        let refs: Vec<&GrayImage> = canvases.iter().collect();
        let probs = cnn::predict_proba(self.params, &refs).map_err(|e| ParseError::Classifier(e.to_string()))?;
        let n = GLYPH_SHIFTS.len() as f32;
        Ok(probs
            .chunks(GLYPH_SHIFTS.len())
            .map(|rows| {
                let mut mean = vec![0.0; rows[0].len()];
                for r in rows {
                    mean.iter_mut().zip(r).for_each(|(m, v)| *m += v / n);
                }
                mean
            })
            .collect())
    }
}

/// Answers with known labels in reading order, for measuring segmentation
/// on its own.
#[derive(Debug, Clone)]
pub struct OracleClassifier {
    pub labels: Vec<u8>,
}

impl DigitClassifier for OracleClassifier {
    fn digit_scores(&self, glyphs: &[GrayImage]) -> Result<Vec<Vec<f32>>, ParseError> {
        if glyphs.len() != self.labels.len() {
            return Err(ParseError::Classifier(format!(
                "oracle knows {} glyphs, got {}",
                self.labels.len(),
                glyphs.len()
            )));
        }
        Ok(self
            .labels
            .iter()
            .map(|&l| {
                let mut row = vec![0.0; 10];
                row[l as usize] = 1.0;
                row
            })
            .collect())
    }
}

/// The widest ink component that is at least 2.5 times wider than tall and
/// spans at least [`BAR_MIN_WIDTH_FRACTION`] of the image. Expects dark
/// strokes on white.
///
/// Ink is pixels below [`INK_THRESHOLD`]; if no component qualifies the
/// search is repeated at [`BAR_FALLBACK_THRESHOLD`]. The returned box covers
/// the bar's grey fringe as well whenever that fringe is still bar-shaped.
pub fn locate_fraction_bar(img: &GrayImage) -> Option<BBox> {
    let cs = connected_components(&binarize(img, INK_THRESHOLD));
    find_bar(img, &cs).map(|b| b.extent(img))
}

/// The detected bar and the ink that belongs to it.
struct Bar {
    bbox: BBox,
    /// Components at [`BAR_FALLBACK_THRESHOLD`] and the bar's id there.
    light: (ComponentSet, u32),
}

impl Bar {
    /// The bar including its grey fringe: the light-mask component when it
    /// is bar-shaped, else the core, grown by neighbouring rows and columns
    /// that are at least half non-white.
    fn extent(&self, img: &GrayImage) -> BBox {
        let (light, lid) = &self.light;
        let inked = |x: usize, y: usize| img.get(x, y) < u8::MAX;
        let mut b = light.get(*lid).map_or(self.bbox, |c| c.bbox);
        for _ in 0..FRINGE_STEPS {
            let row_full = |b: BBox, y: usize| 2 * (b.x0..=b.x1).filter(|&x| inked(x, y)).count() >= b.width();
            let col_full = |b: BBox, x: usize| 2 * (b.y0..=b.y1).filter(|&y| inked(x, y)).count() >= b.height();
            if b.y0 > 0 && row_full(b, b.y0 - 1) {
                b.y0 -= 1;
            }
            if b.y1 + 1 < img.height() && row_full(b, b.y1 + 1) {
                b.y1 += 1;
            }
            if b.x0 > 0 && col_full(b, b.x0 - 1) {
                b.x0 -= 1;
            }
            if b.x1 + 1 < img.width() && col_full(b, b.x1 + 1) {
                b.x1 += 1;
            }
        }
        b
    }

    /// Whether regular component `c` is a piece of the bar: it lies inside
    /// the bar's light-mask component, or it is itself flat and level with
    /// the bar.
    fn contains(&self, cs: &ComponentSet, c: &image::Component) -> bool {
        let level = (self.bbox.y0 as f64..=self.bbox.y1 as f64).contains(&c.centroid.1);
        if level && c.bbox.width() as f64 >= BAR_MIN_ASPECT * c.bbox.height() as f64 {
            return true;
        }
        let (light, lid) = &self.light;
        (c.bbox.y0..=c.bbox.y1).all(|y| {
            (c.bbox.x0..=c.bbox.x1).all(|x| cs.label(x, y) != c.id || light.label(x, y) == *lid)
        })
    }
}

fn is_flat(c: &image::Component, width: usize) -> bool {
    let (w, h) = (c.bbox.width() as f64, c.bbox.height() as f64);
    w >= BAR_MIN_ASPECT * h && w >= BAR_MIN_WIDTH_FRACTION * width as f64
}

fn widest_flat(cs: &ComponentSet, width: usize) -> Option<u32> {
    let mut best: Option<(usize, u32)> = None;
    for c in cs.components.iter().filter(|c| is_flat(c, width)) {
        if best.is_none_or(|(bw, _)| c.bbox.width() > bw) {
            best = Some((c.bbox.width(), c.id));
        }
    }
    best.map(|(_, id)| id)
}

fn find_bar(img: &GrayImage, cs: &ComponentSet) -> Option<Bar> {
    let light = connected_components(&binarize(img, BAR_FALLBACK_THRESHOLD));
    if let Some(id) = widest_flat(cs, img.width()) {
        let c = &cs.components[id as usize - 1];
        let (x, y) = (c.bbox.y0..=c.bbox.y1)
            .flat_map(|y| (c.bbox.x0..=c.bbox.x1).map(move |x| (x, y)))
            .find(|&(x, y)| cs.label(x, y) == id)
            .expect("component owns a pixel in its box");
        // the grey halo joins the fragments; use it only while it stays bar-shaped
        let lid = light.label(x, y);
        let lid = if is_flat(&light.components[lid as usize - 1], img.width()) { lid } else { 0 };
        return Some(Bar {
            bbox: c.bbox,
            light: (light, lid),
        });
    }
    let id = widest_flat(&light, img.width())?;
    Some(Bar {
        bbox: light.components[id as usize - 1].bbox,
        light: (light, id),
    })
}

/// Ink belonging to one glyph: a set of component ids and their joint box.
#[derive(Debug, Clone)]
struct Group {
    ids: Vec<u32>,
    bbox: BBox,
    pixels: usize,
    /// Restricts the group to columns `x0..=x1` after a split.
    columns: Option<(usize, usize)>,
}

impl Group {
    fn owns(&self, cs: &ComponentSet, x: usize, y: usize) -> bool {
        let l = cs.label(x, y);
        l != 0
            && self.ids.contains(&l)
            && self.columns.is_none_or(|(a, b)| (a..=b).contains(&x))
    }

    fn column_profile(&self, cs: &ComponentSet) -> Vec<usize> {
        (self.bbox.x0..=self.bbox.x1)
            .map(|x| (self.bbox.y0..=self.bbox.y1).filter(|&y| self.owns(cs, x, y)).count())
            .collect()
    }

    /// Tight box of the owned pixels, `None` if there are none.
    fn tighten(mut self, cs: &ComponentSet) -> Option<Group> {
        let mut bbox: Option<BBox> = None;
        let mut n = 0;
        for y in self.bbox.y0..=self.bbox.y1 {
            for x in self.bbox.x0..=self.bbox.x1 {
                if self.owns(cs, x, y) {
                    n += 1;
                    match bbox.as_mut() {
                        Some(b) => b.include(x, y),
                        None => bbox = Some(BBox::point(x, y)),
                    }
                }
            }
        }
        self.bbox = bbox?;
        self.pixels = n;
        Some(self)
    }
}

/// Merges components of one row into glyphs. Digits in a row never share
/// columns, so components whose column spans overlap or touch belong to one
/// character (a broken stroke, a detached cap), as do components at most
/// [`MERGE_GAP`] empty columns apart. Groups far smaller than the
/// row's largest are specks and are dropped.
fn group_row(cs: &ComponentSet, ids: &[u32]) -> Vec<Group> {
    let mut parts: Vec<&image::Component> = ids.iter().map(|&id| &cs.components[id as usize - 1]).collect();
    parts.sort_by_key(|c| (c.bbox.x0, c.id));
    let mut groups: Vec<Group> = Vec::new();
    for c in parts {
        match groups.last_mut() {
            Some(g) if c.bbox.x0 <= g.bbox.x1 + MERGE_GAP + 1 => {
                g.ids.push(c.id);
                g.bbox = g.bbox.union(&c.bbox);
                g.pixels += c.pixel_count;
            }
            _ => groups.push(Group {
                ids: vec![c.id],
                bbox: c.bbox,
                pixels: c.pixel_count,
                columns: None,
            }),
        }
    }
    let largest = groups.iter().map(|g| g.pixels).max().unwrap_or(0);
    groups.retain(|g| g.pixels >= MIN_COMPONENT_PIXELS.max(largest / SPECK_RATIO));
    let mut out = Vec::new();
    for g in groups {
        split_touching(cs, g, 0, &mut out);
    }
    out.sort_by_key(|g| (g.bbox.x0, g.bbox.y0));
    out
}

/// Cuts a too-wide group at the emptiest column of its middle half. The cut
/// is kept only if both halves look like characters: each at least 60% as
/// tall as the group and holding at least a fifth of its ink. A single
/// squat digit fails that test and stays whole.
fn split_touching(cs: &ComponentSet, g: Group, depth: usize, out: &mut Vec<Group>) {
    let (w, h) = (g.bbox.width(), g.bbox.height());
    if depth >= MAX_SPLIT_DEPTH || (w as f64) <= TOUCHING_ASPECT * h as f64 || w < 4 {
        out.push(g);
        return;
    }
    let profile = g.column_profile(cs);
    let (lo, hi) = (w / 4, w - w / 4);
    let cut = (lo..hi).min_by_key(|&i| (profile[i], i.abs_diff(w / 2))).unwrap_or(w / 2);
    let x_cut = g.bbox.x0 + cut;
    let left = Group {
        columns: Some((g.bbox.x0, x_cut.saturating_sub(1).max(g.bbox.x0))),
        ..g.clone()
    };
    let right = Group {
        columns: Some((x_cut, g.bbox.x1)),
        ..g.clone()
    };
    let halves: Vec<Group> = [left, right].into_iter().filter_map(|p| p.tighten(cs)).collect();
    let plausible = |p: &Group| 10 * p.bbox.height() >= 6 * h && 5 * p.pixels >= g.pixels;
    if halves.len() == 2 && halves.iter().all(plausible) {
        for p in halves {
            split_touching(cs, p, depth + 1, out);
        }
    } else {
        out.push(g);
    }
}

/// Crops a group's ink (plus its one-pixel antialiased fringe) and
/// normalises it like an MNIST digit: bright on black, longest side scaled
/// to 20, centred on 28×28.
fn normalize_glyph(img: &GrayImage, cs: &ComponentSet, g: &Group) -> GrayImage {
    let b = BBox {
        x0: g.bbox.x0.saturating_sub(1),
        y0: g.bbox.y0.saturating_sub(1),
        x1: (g.bbox.x1 + 1).min(img.width() - 1),
        y1: (g.bbox.y1 + 1).min(img.height() - 1),
    };
    let near = |x: usize, y: usize| {
        if g.owns(cs, x, y) {
            return true;
        }
        if cs.label(x, y) != 0 {
            return false;
        }
        (y.saturating_sub(1)..=(y + 1).min(img.height() - 1))
            .any(|ny| (x.saturating_sub(1)..=(x + 1).min(img.width() - 1)).any(|nx| g.owns(cs, nx, ny)))
    };
    let mut crop = GrayImage::filled(b.width(), b.height(), 0);
    let mut ink: Option<BBox> = None;
    for y in b.y0..=b.y1 {
        for x in b.x0..=b.x1 {
            let v = 255 - img.get(x, y);
            if v > 0 && near(x, y) {
                crop.set(x - b.x0, y - b.y0, v);
                let p = (x - b.x0, y - b.y0);
                match ink.as_mut() {
                    Some(k) => k.include(p.0, p.1),
                    None => ink = Some(BBox::point(p.0, p.1)),
                }
            }
        }
    }
    let crop = match ink {
        Some(k) => crop.crop(k),
        None => crop,
    };
    let scale = GLYPH_BOX as f64 / crop.width().max(crop.height()) as f64;
    let nw = ((crop.width() as f64 * scale).round() as usize).clamp(1, GLYPH_BOX);
    let nh = ((crop.height() as f64 * scale).round() as usize).clamp(1, GLYPH_BOX);
    let scaled = image::resize(&crop, nw, nh, ResizeMethod::Bilinear);
    center_of_mass_place(&scaled)
}

/// Places `glyph` on the glyph canvas with its intensity centroid at the
/// centre, the way MNIST digits are framed.
fn center_of_mass_place(glyph: &GrayImage) -> GrayImage {
    let (mut sx, mut sy, mut total) = (0.0, 0.0, 0.0);
    for y in 0..glyph.height() {
        for x in 0..glyph.width() {
            let v = glyph.get(x, y) as f64;
            sx += v * x as f64;
            sy += v * y as f64;
            total += v;
        }
    }
    let place = |c: f64, len: usize| {
        let c = if total > 0.0 { c / total } else { (len as f64 - 1.0) / 2.0 };
        let half = (GLYPH_SIDE as f64 - 1.0) / 2.0;
        ((half - c).round() as i64).clamp(0, (GLYPH_SIDE - len) as i64)
    };
    let mut out = GrayImage::filled(GLYPH_SIDE, GLYPH_SIDE, 0);
    image::paste_max_into(&mut out, glyph, place(sx, glyph.width()), place(sy, glyph.height()))
        .expect("glyph box fits the glyph canvas");
    out
}

/// Splits the ink around `bar` into numerator and denominator glyphs, each
/// row in left-to-right order.
///
/// `bar` is normally the box returned by [`locate_fraction_bar`]; ink inside
/// it that only reaches the fallback threshold is treated as bar.
pub fn segment_fraction(img: &GrayImage, bar: BBox) -> Result<Segmentation, ParseError> {
    let cs = connected_components(&binarize(img, INK_THRESHOLD));
    let found = find_bar(img, &cs).filter(|b| b.bbox == bar || b.extent(img) == bar).unwrap_or(Bar {
        bbox: bar,
        light: (connected_components(&binarize(img, BAR_FALLBACK_THRESHOLD)), 0),
    });
    segment_with(img, &cs, &found)
}

fn segment_with(img: &GrayImage, cs: &ComponentSet, found: &Bar) -> Result<Segmentation, ParseError> {
    let bar = found.bbox;
    let mut above = Vec::new();
    let mut below = Vec::new();
    for c in &cs.components {
        if found.contains(cs, c) {
            continue;
        }
        let cy = c.centroid.1;
        if cy < bar.y0 as f64 {
            above.push(c.id);
        } else if cy > bar.y1 as f64 {
            below.push(c.id);
        } else if c.pixel_count >= MIN_COMPONENT_PIXELS {
            return Err(ParseError::AmbiguousComponent(c.bbox));
        }
    }
    let glyphs = |ids: &[u32]| -> Vec<Glyph> {
        group_row(cs, ids)
            .iter()
            .map(|g| Glyph {
                bbox: g.bbox,
                image: normalize_glyph(img, cs, g),
            })
            .collect()
    };
    let numerator = glyphs(&above);
    if numerator.is_empty() {
        return Err(ParseError::EmptyNumerator);
    }
    let denominator = glyphs(&below);
    if denominator.is_empty() {
        return Err(ParseError::EmptyDenominator);
    }
    Ok(Segmentation {
        numerator,
        denominator,
    })
}

fn best_digit(scores: &[f32]) -> Result<(u8, f32), ParseError> {
    if scores.len() < 10 {
        return Err(ParseError::Classifier(format!("{} scores, need 10", scores.len())));
    }
    let digits = &scores[..10];
    let mut best = 0;
    for (i, &s) in digits.iter().enumerate() {
        if s > digits[best] {
            best = i;
        }
    }
    let total: f32 = digits.iter().sum();
    let confidence = if total > 0.0 { digits[best] / total } else { 0.0 };
    Ok((best as u8, confidence))
}

fn assemble(digits: &[u8]) -> Result<u64, ParseError> {
    digits.iter().try_fold(0u64, |acc, &d| {
        acc.checked_mul(10)
            .and_then(|v| v.checked_add(d as u64))
            .ok_or(ParseError::Overflow)
    })
}

/// Decodes a fraction (or, without a bar, a single digit) from a dark-on-white
/// image.
pub fn decode_fraction(img: &GrayImage, model: &dyn DigitClassifier) -> Result<ParseResult, ParseError> {
    let cs = connected_components(&binarize(img, INK_THRESHOLD));
    let Some(found) = find_bar(img, &cs) else {
        return decode_digit(img, &cs, model);
    };
    let seg = segment_with(img, &cs, &found)?;
    let images: Vec<GrayImage> = seg
        .numerator
        .iter()
        .chain(&seg.denominator)
        .map(|g| g.image.clone())
        .collect();
    let scores = model.digit_scores(&images)?;
    if scores.len() != images.len() {
        return Err(ParseError::Classifier(format!("{} rows for {} glyphs", scores.len(), images.len())));
    }
    let picks = scores.iter().map(|s| best_digit(s)).collect::<Result<Vec<_>, _>>()?;
    let (num, den) = picks.split_at(seg.numerator.len());
    let digits = |p: &[(u8, f32)]| p.iter().map(|&(d, _)| d).collect::<Vec<_>>();
    let confidences = |p: &[(u8, f32)]| p.iter().map(|&(_, c)| c).collect::<Vec<_>>();
    let value = Rational::new(assemble(&digits(num))?, assemble(&digits(den))?)?;
    Ok(ParseResult {
        kind: ParseKind::Fraction {
            value,
            numerator_confidences: confidences(num),
            denominator_confidences: confidences(den),
        },
        bar: Some(found.extent(img)),
        glyphs: seg.numerator.iter().chain(&seg.denominator).map(|g| g.bbox).collect(),
    })
}

fn decode_digit(img: &GrayImage, cs: &ComponentSet, model: &dyn DigitClassifier) -> Result<ParseResult, ParseError> {
    let mut parts: BTreeMap<u32, usize> = BTreeMap::new();
    for c in &cs.components {
        parts.insert(c.id, c.pixel_count);
    }
    let Some(bbox) = cs.components.iter().map(|c| c.bbox).reduce(|a, b| a.union(&b)) else {
        return Err(ParseError::NoContent);
    };
    let g = Group {
        ids: parts.keys().copied().collect(),
        bbox,
        pixels: parts.values().sum(),
        columns: None,
    };
    let glyph = normalize_glyph(img, cs, &g);
    let scores = model.digit_scores(std::slice::from_ref(&glyph))?;
    let (label, confidence) = best_digit(scores.first().ok_or(ParseError::Classifier("no scores".into()))?)?;
    Ok(ParseResult {
        kind: ParseKind::Digit { label, confidence },
        bar: None,
        glyphs: vec![bbox],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: u8 = 255;

    /// White canvas with dark rectangles (inclusive corners).
    fn canvas(side: usize, rects: &[(usize, usize, usize, usize)]) -> GrayImage {
        let mut img = GrayImage::filled(side, side, W);
        for &(x0, y0, x1, y1) in rects {
            for y in y0..=y1 {
                for x in x0..=x1 {
                    img.set(x, y, 0);
                }
            }
        }
        img
    }

    const BAR: (usize, usize, usize, usize) = (8, 27, 47, 29);

    #[test]
    fn rational_keeps_written_form() {
        let r = Rational::new(3, 6).unwrap();
        assert_eq!((r.numerator(), r.denominator()), (3, 6));
        assert_eq!(r.to_string(), "3/6");
        assert_eq!(r.value(), 0.5);
        assert_eq!(Rational::new(1, 0), Err(ParseError::ZeroDenominator));
    }

    #[test]
    fn blank_image_has_no_bar() {
        assert_eq!(locate_fraction_bar(&GrayImage::filled(56, 56, W)), None);
    }

    #[test]
    fn bar_test_uses_aspect_and_width() {
        let img = canvas(56, &[BAR]);
        assert_eq!(
            locate_fraction_bar(&img),
            Some(BBox {
                x0: 8,
                y0: 27,
                x1: 47,
                y1: 29
            })
        );
        // wide enough but too thick
        assert_eq!(locate_fraction_bar(&canvas(56, &[(8, 10, 47, 30)])), None);
        // flat but no wider than a digit box
        assert_eq!(locate_fraction_bar(&canvas(56, &[(8, 27, 27, 29)])), None);
        assert!(locate_fraction_bar(&canvas(56, &[(8, 27, 28, 29)])).is_some());
        // widest wins
        let two = canvas(56, &[(2, 5, 53, 6), BAR]);
        assert_eq!(locate_fraction_bar(&two).unwrap().x0, 2);
    }

    #[test]
    fn tall_stroke_is_not_a_bar() {
        assert_eq!(locate_fraction_bar(&canvas(56, &[(26, 10, 29, 45)])), None);
    }

    #[test]
    fn segments_rows_in_reading_order() {
        let img = canvas(56, &[BAR, (30, 5, 33, 20), (14, 5, 17, 20), (22, 35, 25, 50)]);
        let bar = locate_fraction_bar(&img).unwrap();
        let seg = segment_fraction(&img, bar).unwrap();
        assert_eq!(seg.numerator.len(), 2);
        assert_eq!(seg.denominator.len(), 1);
        assert!(seg.numerator[0].bbox.x0 < seg.numerator[1].bbox.x0);
        for g in seg.numerator.iter().chain(&seg.denominator) {
            assert_eq!((g.image.width(), g.image.height()), (GLYPH_SIDE, GLYPH_SIDE));
            let ink = g.image.content_bbox(1).unwrap();
            assert_eq!(ink.height(), GLYPH_BOX);
        }
    }

    #[test]
    fn bar_only_image_has_empty_numerator() {
        let img = canvas(56, &[BAR]);
        let bar = locate_fraction_bar(&img).unwrap();
        assert_eq!(segment_fraction(&img, bar), Err(ParseError::EmptyNumerator));
    }

    #[test]
    fn missing_denominator_is_reported() {
        let img = canvas(56, &[BAR, (20, 5, 23, 20)]);
        let bar = locate_fraction_bar(&img).unwrap();
        assert_eq!(segment_fraction(&img, bar), Err(ParseError::EmptyDenominator));
    }

    #[test]
    fn component_level_with_bar_is_ambiguous() {
        let img = canvas(56, &[BAR, (20, 5, 23, 20), (20, 35, 23, 50), (50, 24, 52, 32)]);
        let bar = locate_fraction_bar(&img).unwrap();
        assert!(matches!(segment_fraction(&img, bar), Err(ParseError::AmbiguousComponent(_))));
    }

    #[test]
    fn broken_stroke_stays_one_glyph() {
        // a digit drawn as two stacked pieces
        let img = canvas(56, &[BAR, (20, 3, 25, 10), (21, 13, 24, 22), (20, 35, 23, 50)]);
        let seg = segment_fraction(&img, locate_fraction_bar(&img).unwrap()).unwrap();
        assert_eq!(seg.numerator.len(), 1);
        assert_eq!(seg.numerator[0].bbox.y0, 3);
        assert_eq!(seg.numerator[0].bbox.y1, 22);
    }

    #[test]
    fn touching_pair_is_split_at_the_thin_neck() {
        // two 6-wide blocks joined by a 1-pixel bridge: 19 wide, 10 tall
        let img = canvas(56, &[BAR, (10, 10, 15, 19), (16, 14, 22, 14), (23, 10, 28, 19), (20, 35, 23, 50)]);
        let seg = segment_fraction(&img, locate_fraction_bar(&img).unwrap()).unwrap();
        assert_eq!(seg.numerator.len(), 2);
        assert!(seg.numerator[0].bbox.x1 < seg.numerator[1].bbox.x0);
    }

    #[test]
    fn glyph_is_bright_on_black_and_centred() {
        let img = canvas(56, &[BAR, (20, 5, 29, 14), (20, 35, 23, 50)]);
        let seg = segment_fraction(&img, locate_fraction_bar(&img).unwrap()).unwrap();
        let g = &seg.numerator[0].image;
        assert_eq!(g.get(0, 0), 0);
        assert_eq!(g.get(14, 14), 255);
        assert_eq!(g.content_bbox(1).unwrap(), BBox { x0: 4, y0: 4, x1: 23, y1: 23 });
    }

    #[test]
    fn oracle_decode_assembles_positionally() {
        let img = canvas(56, &[BAR, (14, 5, 17, 20), (30, 5, 33, 20), (14, 35, 17, 50), (30, 35, 33, 50)]);
        let oracle = OracleClassifier { labels: vec![1, 2, 3, 4] };
        let r = decode_fraction(&img, &oracle).unwrap();
        assert_eq!(r.rational(), Some(Rational::new(12, 34).unwrap()));
        assert_eq!(r.glyphs.len(), 4);
        let j = r.to_json();
        assert_eq!(j["kind"], "fraction");
        assert_eq!(j["numerator"], 12);
        assert_eq!(j["denominator"], 34);
    }

    #[test]
    fn zero_denominator_is_an_error() {
        let img = canvas(56, &[BAR, (20, 5, 23, 20), (20, 35, 23, 50)]);
        let oracle = OracleClassifier { labels: vec![3, 0] };
        assert_eq!(decode_fraction(&img, &oracle), Err(ParseError::ZeroDenominator));
    }

    #[test]
    fn argmax_ignores_the_fraction_class() {
        struct Fixed;
        impl DigitClassifier for Fixed {
            fn digit_scores(&self, g: &[GrayImage]) -> Result<Vec<Vec<f32>>, ParseError> {
                let mut row = vec![0.01; 11];
                row[7] = 0.2;
                row[10] = 0.7;
                Ok(vec![row; g.len()])
            }
        }
        let img = canvas(56, &[(24, 10, 29, 40)]);
        let r = decode_fraction(&img, &Fixed).unwrap();
        match r.kind {
            ParseKind::Digit { label, confidence } => {
                assert_eq!(label, 7);
                assert!((confidence - 0.2 / 0.29).abs() < 1e-6);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn blank_image_is_no_content() {
        let oracle = OracleClassifier { labels: vec![] };
        assert_eq!(decode_fraction(&GrayImage::filled(56, 56, W), &oracle), Err(ParseError::NoContent));
    }

    #[test]
    fn oracle_rejects_count_mismatch() {
        let img = canvas(56, &[BAR, (20, 5, 23, 20), (20, 35, 23, 50)]);
        let oracle = OracleClassifier { labels: vec![1] };
        assert!(matches!(decode_fraction(&img, &oracle), Err(ParseError::Classifier(_))));
    }
}
