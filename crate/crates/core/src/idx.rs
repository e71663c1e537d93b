//! IDX containers and PGM export.
//!
//! Layout of an IDX file: two zero bytes, a type code, the number of axes,
//! one big-endian `u32` per axis, then the row-major payload. Only the
//! unsigned-byte type (`0x08`) is supported.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::image::GrayImage;

/// IDX type code for unsigned bytes.
pub const TYPE_U8: u8 = 0x08;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("truncated IDX header: need {needed} bytes, got {got}")]
    TruncatedHeader { needed: usize, got: usize },
    #[error("bad IDX magic: first two bytes must be zero, got {0:02x} {1:02x}")]
    BadMagic(u8, u8),
    #[error("unsupported IDX type code 0x{0:02x} (only 0x08 is supported)")]
    UnsupportedTypeCode(u8),
    #[error("unsupported IDX axis count {0} (expected 1 to 3)")]
    UnsupportedAxisCount(u8),
    #[error("IDX axis {axis} has length zero")]
    ZeroAxis { axis: usize },
    #[error("IDX payload is {actual} bytes, dims require {expected}")]
    PayloadLengthMismatch { expected: usize, actual: usize },
    #[error("invalid PGM: {0}")]
    InvalidPgm(String),
    #[error("no MNIST IDX files found in {0}")]
    MissingMnist(PathBuf),
    #[error("MNIST images {images} and labels {labels} disagree in count")]
    MnistCountMismatch { images: usize, labels: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// An unsigned-byte IDX tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    dims: Vec<usize>,
    data: Vec<u8>,
}

impl IdxTensor {
    pub fn new(dims: Vec<usize>, data: Vec<u8>) -> Result<Self, IdxError> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(IdxError::UnsupportedAxisCount(dims.len() as u8));
        }
        if let Some(axis) = dims.iter().position(|&d| d == 0) {
            return Err(IdxError::ZeroAxis { axis });
        }
        let expected: usize = dims.iter().product();
        if expected != data.len() {
            return Err(IdxError::PayloadLengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(IdxTensor { dims, data })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    /// Stacks equally sized images into an `[N, H, W]` tensor.
    pub fn from_images(images: &[GrayImage]) -> Result<Self, IdxError> {
        let first = images.first().ok_or(IdxError::ZeroAxis { axis: 0 })?;
        let (w, h) = (first.width(), first.height());
        let mut data = Vec::with_capacity(images.len() * w * h);
        for img in images {
            if img.width() != w || img.height() != h {
                return Err(IdxError::PayloadLengthMismatch {
                    expected: w * h,
                    actual: img.width() * img.height(),
                });
            }
            data.extend_from_slice(img.pixels());
        }
        IdxTensor::new(vec![images.len(), h, w], data)
    }

    /// Splits an `[N, H, W]` tensor back into images.
    pub fn to_images(&self) -> Result<Vec<GrayImage>, IdxError> {
        if self.dims.len() != 3 {
            return Err(IdxError::UnsupportedAxisCount(self.dims.len() as u8));
        }
        let (h, w) = (self.dims[1], self.dims[2]);
        Ok(self
            .data
            .chunks_exact(w * h)
            .map(|px| GrayImage::from_vec(w, h, px.to_vec()).expect("dims checked"))
            .collect())
    }
}

/// Parses an IDX byte buffer.
pub fn read_idx(bytes: &[u8]) -> Result<IdxTensor, IdxError> {
    if bytes.len() < 4 {
        return Err(IdxError::TruncatedHeader {
            needed: 4,
            got: bytes.len(),
        });
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(IdxError::BadMagic(bytes[0], bytes[1]));
    }
    if bytes[2] != TYPE_U8 {
        return Err(IdxError::UnsupportedTypeCode(bytes[2]));
    }
    let axes = bytes[3];
    if axes == 0 || axes > 3 {
        return Err(IdxError::UnsupportedAxisCount(axes));
    }
    let header_len = 4 + 4 * axes as usize;
    if bytes.len() < header_len {
        return Err(IdxError::TruncatedHeader {
            needed: header_len,
            got: bytes.len(),
        });
    }
    let dims: Vec<usize> = bytes[4..header_len]
        .chunks_exact(4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
        .collect();
    IdxTensor::new(dims, bytes[header_len..].to_vec())
}

/// Serializes a tensor: magic, big-endian dims, payload.
pub fn write_idx(t: &IdxTensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * t.dims.len() + t.data.len());
    out.extend_from_slice(&[0, 0, TYPE_U8, t.dims.len() as u8]);
    for &d in &t.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&t.data);
    out
}

/// Binary PGM (`P5`, maxval 255).
pub fn write_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend_from_slice(img.pixels());
    out
}

/// Reads a binary `P5` PGM with maxval 255. Comments are allowed in the header.
pub fn read_pgm(bytes: &[u8]) -> Result<GrayImage, IdxError> {
    let bad = |m: &str| IdxError::InvalidPgm(m.to_string());
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("non-ascii header"))?);
    }
    // exactly one whitespace byte separates maxval from the raster
    pos += 1;
    if fields[0] != "P5" {
        return Err(bad("only binary P5 is supported"));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| bad("non-numeric header field"));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    let payload = bytes.get(pos..pos + w * h).ok_or_else(|| bad("truncated raster"))?;
    GrayImage::from_vec(w, h, payload.to_vec()).map_err(|e| IdxError::InvalidPgm(e.to_string()))
}

pub fn read_idx_file(path: &Path) -> Result<IdxTensor, IdxError> {
    let bytes = fs::read(path).map_err(|source| IdxError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_idx(&bytes)
}

pub fn write_idx_file(path: &Path, t: &IdxTensor) -> Result<(), IdxError> {
    fs::write(path, write_idx(t)).map_err(|source| IdxError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// MNIST digits with their labels.
#[derive(Debug, Clone)]
pub struct Mnist {
    pub images: Vec<GrayImage>,
    pub labels: Vec<u8>,
}

impl Mnist {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Loads every standard MNIST pair present in `dir`
    /// (`train-*` first, then `t10k-*`) and concatenates them.
    pub fn load_dir(dir: &Path) -> Result<Self, IdxError> {
        let mut images = Vec::new();
        let mut labels = Vec::new();
        for prefix in ["train", "t10k"] {
            let img_path = dir.join(format!("{prefix}-images-idx3-ubyte"));
            let lbl_path = dir.join(format!("{prefix}-labels-idx1-ubyte"));
            if !img_path.exists() || !lbl_path.exists() {
                continue;
            }
            let imgs = read_idx_file(&img_path)?.to_images()?;
            let lbls = read_idx_file(&lbl_path)?.into_data();
            if imgs.len() != lbls.len() {
                return Err(IdxError::MnistCountMismatch {
                    images: imgs.len(),
                    labels: lbls.len(),
                });
            }
            images.extend(imgs);
            labels.extend(lbls);
        }
        if labels.is_empty() {
            return Err(IdxError::MissingMnist(dir.to_path_buf()));
        }
        Ok(Mnist { images, labels })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_one_axis_fixture() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 3, 5, 7, 9];
        let t = read_idx(&bytes).unwrap();
        assert_eq!(t.dims(), &[3]);
        assert_eq!(t.data(), &[5, 7, 9]);
        assert_eq!(write_idx(&t), bytes.to_vec());
    }

    #[test]
    fn reads_three_axis_fixture() {
        let bytes = [
            0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 1, 2, 3, 4,
        ];
        let t = read_idx(&bytes).unwrap();
        assert_eq!(t.dims(), &[1, 2, 2]);
        assert_eq!(t.data(), &[1, 2, 3, 4]);
    }

    #[test]
    fn header_length_is_four_plus_four_per_axis() {
        let t = IdxTensor::new(vec![2, 2, 2], (0..8).collect()).unwrap();
        let bytes = write_idx(&t);
        assert_eq!(bytes.len(), 4 + 4 * 3 + 8);
        assert_eq!(bytes.len(), 24);
    }

    #[test]
    fn dims_are_big_endian() {
        let t = IdxTensor::new(vec![300], vec![0; 300]).unwrap();
        assert_eq!(&write_idx(&t)[4..8], &[0x00, 0x00, 0x01, 0x2C]);
    }

    #[test]
    fn rejects_malformed_inputs() {
        assert!(matches!(
            read_idx(&[0, 0, 8]),
            Err(IdxError::TruncatedHeader { .. })
        ));
        assert!(matches!(
            read_idx(&[0, 0, 8, 2, 0, 0, 0, 1]),
            Err(IdxError::TruncatedHeader { .. })
        ));
        assert!(matches!(
            read_idx(&[0, 0, 0x0D, 1, 0, 0, 0, 1, 0, 0, 0, 0]),
            Err(IdxError::UnsupportedTypeCode(0x0D))
        ));
        assert!(matches!(
            read_idx(&[0, 0, 8, 1, 0, 0, 0, 3, 1, 2]),
            Err(IdxError::PayloadLengthMismatch {
                expected: 3,
                actual: 2
            })
        ));
        assert!(matches!(
            read_idx(&[1, 0, 8, 1, 0, 0, 0, 1, 1]),
            Err(IdxError::BadMagic(1, 0))
        ));
    }

    #[test]
    fn pgm_fixtures() {
        let one = GrayImage::from_vec(1, 1, vec![0]).unwrap();
        assert_eq!(write_pgm(&one), b"P5\n1 1\n255\n\x00".to_vec());
        let two = GrayImage::from_vec(2, 1, vec![0, 255]).unwrap();
        assert_eq!(write_pgm(&two), b"P5\n2 1\n255\n\x00\xff".to_vec());
    }

    #[test]
    fn pgm_reader_accepts_comments() {
        let img = read_pgm(b"P5\n# made by hand\n2 1\n255\n\x07\x08").unwrap();
        assert_eq!(img.pixels(), &[7, 8]);
        assert!(read_pgm(b"P2\n1 1\n255\n0").is_err());
    }

    fn tensor_strategy() -> impl Strategy<Value = IdxTensor> {
        prop::collection::vec(1usize..6, 1..=3).prop_flat_map(|dims| {
            let n: usize = dims.iter().product();
            prop::collection::vec(any::<u8>(), n)
                .prop_map(move |data| IdxTensor::new(dims.clone(), data).unwrap())
        })
    }

    proptest! {
        #[test]
        fn idx_round_trip(t in tensor_strategy()) {
            let bytes = write_idx(&t);
            let back = read_idx(&bytes).unwrap();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(write_idx(&back), bytes);
        }

        #[test]
        fn pgm_payload_is_width_times_height(w in 1usize..20, h in 1usize..20, v in any::<u8>()) {
            let img = GrayImage::filled(w, h, v);
            let bytes = write_pgm(&img);
            let header = format!("P5\n{w} {h}\n255\n");
            prop_assert_eq!(bytes.len() - header.len(), w * h);
            prop_assert_eq!(read_pgm(&bytes).unwrap(), img);
        }
    }
}
