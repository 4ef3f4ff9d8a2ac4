//! Binary checkpoint format.
//!
//! ```text
//! magic     8 bytes  "MELSCKPT"
//! version   u32
//! arch      u32 length + UTF-8 descriptor (one layer per line)
//! metadata  u32 count, then (u32 len + key, u32 len + value) pairs, sorted by key
//! tensors   u32 count, then per tensor:
//!           u32 len + name, u32 ndim, ndim x u32 dims, f32 payload
//! ```
//!
//! All integers and floats are little-endian. Writing is deterministic.

use std::collections::BTreeMap;
use std::path::Path;

use super::model::Sequential;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MELSCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub architecture: String,
    pub metadata: BTreeMap<String, String>,
    pub tensors: Vec<NamedTensor>,
}

fn param_name(layer: usize, idx: usize) -> String {
    format!("layer{layer}.{}", if idx == 0 { "weight" } else { "bias" })
}

impl ModelCheckpoint {
    pub fn from_model<T: Scalar>(model: &Sequential<T>, metadata: BTreeMap<String, String>) -> Self {
        let tensors = model
            .layers
            .iter()
            .enumerate()
            .flat_map(|(li, l)| {
                l.params.iter().enumerate().map(move |(pi, p)| NamedTensor {
                    name: param_name(li, pi),
                    shape: p.shape().to_vec(),
                    data: p.data().iter().map(|v| v.as_f64() as f32).collect(),
                })
            })
            .collect();
        Self {
            architecture: model.descriptor(),
            metadata,
            tensors,
        }
    }

    pub fn layer_count(&self) -> usize {
        if self.architecture.is_empty() {
            0
        } else {
            self.architecture.lines().count()
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Copies parameters into `model`, whose descriptor must match exactly.
    pub fn load_into<T: Scalar>(&self, model: &mut Sequential<T>) -> Result<()> {
        if model.descriptor() != self.architecture {
            return Err(Error::Checkpoint(format!(
                "architecture mismatch:\n  checkpoint: {}\n  model:      {}",
                self.architecture.replace('\n', " | "),
                model.descriptor().replace('\n', " | ")
            )));
        }
        self.load_prefix(model)
    }

    /// Copies parameters into the first `layer_count()` layers of `model`.
    /// Those layers must have exactly the checkpoint's architecture.
    pub fn load_prefix<T: Scalar>(&self, model: &mut Sequential<T>) -> Result<()> {
        let n = self.layer_count();
        if n > model.layers.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {n} layers, model only {}",
                model.layers.len()
            )));
        }
        let prefix = super::model::descriptor_of(&model.specs()[..n]);
        if prefix != self.architecture {
            return Err(Error::Checkpoint(format!(
                "architecture mismatch in leading {n} layers:\n  checkpoint: {}\n  model:      {}",
                self.architecture.replace('\n', " | "),
                prefix.replace('\n', " | ")
            )));
        }
        for (li, layer) in model.layers[..n].iter_mut().enumerate() {
            for (pi, p) in layer.params.iter_mut().enumerate() {
                let name = param_name(li, pi);
                let t = self
                    .tensor(&name)
                    .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
                if t.shape != p.shape() {
                    return Err(Error::Checkpoint(format!(
                        "{name}: stored shape {:?}, model expects {:?}",
                        t.shape,
                        p.shape()
                    )));
                }
                for (dst, &src) in p.data_mut().iter_mut().zip(&t.data) {
                    *dst = T::from_f64_lossy(src as f64);
                }
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.architecture);
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let architecture = r.string()?;
        let mut metadata = BTreeMap::new();
        for _ in 0..r.u32()? {
            let k = r.string()?;
            let v = r.string()?;
            metadata.insert(k, v);
        }
        let count = r.u32()?;
        let mut tensors = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes".into()));
        }
        Ok(Self {
            architecture,
            metadata,
            tensors,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Converts a stored tensor back to a [`Tensor`].
    pub fn to_tensor(&self, name: &str) -> Option<Tensor<f32>> {
        let t = self.tensor(name)?;
        Tensor::from_vec(&t.shape, t.data.clone()).ok()
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("invalid utf-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::LayerSpec;
    use crate::nn::ops::Padding;

    fn specs() -> Vec<LayerSpec> {
        vec![
            LayerSpec::Conv1d {
                in_channels: 1,
                filters: 4,
                kernel: 8,
                stride: 4,
                padding: Padding::Same,
            },
            LayerSpec::Relu,
            LayerSpec::Flatten,
            LayerSpec::Dense {
                inputs: 16,
                outputs: 3,
            },
        ]
    }

    #[test]
    fn round_trip_and_load() {
        let m = Sequential::<f32>::build(&specs(), &[1, 16], 11).unwrap();
        let mut meta = BTreeMap::new();
        meta.insert("epochs".to_string(), "3".to_string());
        let ck = ModelCheckpoint::from_model(&m, meta);
        let back = ModelCheckpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        let mut other = Sequential::<f32>::build(&specs(), &[1, 16], 12).unwrap();
        back.load_into(&mut other).unwrap();
        for (a, b) in m.layers.iter().zip(&other.layers) {
            assert_eq!(a.params, b.params);
        }
    }

    #[test]
    fn mismatched_architecture_is_rejected() {
        let m = Sequential::<f32>::build(&specs(), &[1, 16], 11).unwrap();
        let ck = ModelCheckpoint::from_model(&m, BTreeMap::new());
        let mut s = specs();
        s[3] = LayerSpec::Dense {
            inputs: 16,
            outputs: 4,
        };
        let mut other = Sequential::<f32>::build(&s, &[1, 16], 0).unwrap();
        assert!(ck.load_into(&mut other).is_err());
    }

    #[test]
    fn prefix_load_into_larger_stack() {
        let head = Sequential::<f32>::build(&specs()[..2], &[1, 16], 4).unwrap();
        let ck = ModelCheckpoint::from_model(&head, BTreeMap::new());
        let mut full = Sequential::<f32>::build(&specs(), &[1, 16], 5).unwrap();
        ck.load_prefix(&mut full).unwrap();
        assert_eq!(full.layers[0].params, head.layers[0].params);
    }

    #[test]
    fn truncated_bytes_fail() {
        let m = Sequential::<f32>::build(&specs(), &[1, 16], 11).unwrap();
        let bytes = ModelCheckpoint::from_model(&m, BTreeMap::new()).to_bytes();
        assert!(ModelCheckpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(ModelCheckpoint::from_bytes(b"NOTACKPT").is_err());
    }
}
