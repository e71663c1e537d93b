//! Binary checkpoint container.
//!
//! Layout: magic `MFCNN\0\0\0`, `u32` version, `u64` header length, a JSON
//! header (architecture, training config, tensor table), then every tensor
//! as little-endian `f32` in header order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::{CnnArch, CnnParams, Param};
use super::train::TrainHyper;
use super::CnnError;
use crate::dataset::AugmentParams;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MFCNN\0\0\0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    decay: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    arch: CnnArch,
    hyper: Option<TrainHyper>,
    augment: Option<AugmentParams>,
    tensors: Vec<TensorEntry>,
}

/// A trained network plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: CnnParams<f32>,
    pub hyper: Option<TrainHyper>,
    pub augment: Option<AugmentParams>,
}

impl Checkpoint {
    pub fn new(params: CnnParams<f32>) -> Self {
        Checkpoint {
            params,
            hyper: None,
            augment: None,
        }
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<(), CnnError> {
        let header = Header {
            arch: self.params.arch.clone(),
            hyper: self.hyper.clone(),
            augment: self.augment.clone(),
            tensors: self
                .params
                .tensors
                .iter()
                .map(|p| TensorEntry {
                    name: p.name.clone(),
                    shape: p.shape.clone(),
                    decay: p.decay,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| CnnError::Checkpoint(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for p in &self.params.tensors {
            let bytes: Vec<u8> = p.data.iter().flat_map(|v| v.to_le_bytes()).collect();
            w.write_all(&bytes)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from(mut r: impl Read) -> Result<Self, CnnError> {
        let bad = |m: String| CnnError::Checkpoint(m);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let len = u64::from_le_bytes(b8);
        if len > 1 << 24 {
            return Err(bad(format!("header length {len} is implausible")));
        }
        let mut json = vec![0u8; len as usize];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| bad(e.to_string()))?;
        header.arch.validate()?;

        let expected = header.arch.layout();
        if expected.len() != header.tensors.len() {
            return Err(bad("tensor count does not match architecture".into()));
        }
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for (entry, (name, shape, ..)) in header.tensors.into_iter().zip(expected) {
            if entry.name != name || entry.shape != shape {
                return Err(bad(format!("tensor {} has unexpected shape {:?}", entry.name, entry.shape)));
            }
            let n: usize = entry.shape.iter().product();
            let mut raw = vec![0u8; n * 4];
            r.read_exact(&mut raw)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(Param {
                name: entry.name,
                shape: entry.shape,
                data,
                decay: entry.decay,
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes after tensors".into()));
        }
        Ok(Checkpoint {
            params: CnnParams {
                arch: header.arch,
                tensors,
            },
            hyper: header.hyper,
            augment: header.augment,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<(), CnnError> {
    ckpt.write_to(BufWriter::new(File::create(path)?))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CnnError> {
    Checkpoint::read_from(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let params = CnnParams::<f32>::init(&CnnArch::reduced(16), 3).unwrap();
        Checkpoint {
            params,
            hyper: Some(TrainHyper::default()),
            augment: None,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let mut buf = Vec::new();
        ck.write_to(&mut buf).unwrap();
        assert_eq!(Checkpoint::read_from(&buf[..]).unwrap(), ck);
    }

    #[test]
    fn rejects_corruption() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();

        let mut wrong_magic = buf.clone();
        wrong_magic[0] = b'X';
        assert!(Checkpoint::read_from(&wrong_magic[..]).is_err());

        let mut wrong_version = buf.clone();
        wrong_version[8] = 99;
        assert!(Checkpoint::read_from(&wrong_version[..]).is_err());

        assert!(Checkpoint::read_from(&buf[..buf.len() - 1]).is_err());

        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(Checkpoint::read_from(&trailing[..]).is_err());
    }

    #[test]
    fn file_helpers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let ck = sample();
        save_checkpoint(&path, &ck).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), ck);
    }
}
