//! FP32 weight store and the `SWNT` binary container.
//!
//! Container layout, all integers little-endian:
//!
//! ```text
//! "SWNT" | u16 version=1 | u32 entry_count
//! per entry: u16 name_len | name | u8 dtype (0=FP32, 1=INT8) | u8 rank | u32 dims[rank]
//!            INT8 only: f32 t_min | f32 t_max | u32 range_lp
//!            payload (f32 values or u8 codes)
//! ```
//!
//! Entry names are `<layer>.weight` and `<layer>.bias`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;

use crate::graph::{DataType, NetworkGraph, TensorShape};
use crate::quant::{QuantParams, QuantizedLayer};
use crate::synth;
use crate::tensor::{QuantizedTensor, Tensor};

pub const MAGIC: &[u8; 4] = b"SWNT";
pub const VERSION: u16 = 1;

/// Half-width of the uniform distribution used for synthetic weights.
pub const SYNTHETIC_WEIGHT_LIMIT: f32 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum WeightsError {
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not a weights container (bad magic)")]
    BadMagic,
    #[error("unsupported container version {0}")]
    UnsupportedVersion(u16),
    #[error("container truncated at byte {0}")]
    Truncated(usize),
    #[error("unknown dtype code {0}")]
    BadDtype(u8),
    #[error("entry `{0}`: {1}")]
    BadEntry(String, String),
    #[error("layer `{0}` has no weights in the container")]
    Missing(String),
    #[error("entry `{name}` has shape {got}, layer expects {expected}")]
    ShapeMismatch {
        name: String,
        expected: TensorShape,
        got: TensorShape,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub weight: Tensor,
    pub bias: Option<Tensor>,
}

/// FP32 weights keyed by layer name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Weights {
    layers: BTreeMap<String, LayerWeights>,
}

impl Weights {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, layer: impl Into<String>, w: LayerWeights) {
        self.layers.insert(layer.into(), w);
    }

    pub fn get(&self, layer: &str) -> Option<&LayerWeights> {
        self.layers.get(layer)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &LayerWeights)> {
        self.layers.iter()
    }

    /// Seeded uniform weights in ±`SYNTHETIC_WEIGHT_LIMIT` for every
    /// parametric layer, drawn in layer order.
    pub fn synthetic(net: &NetworkGraph, seed: u64) -> Self {
        let mut rng = synth::rng(seed, synth::Stream::Weights);
        let mut out = Weights::new();
        let lim = SYNTHETIC_WEIGHT_LIMIT;
        for (layer, info) in net.layers().iter().zip(net.info()) {
            let Some(wshape) = &info.weight else { continue };
            let w: Vec<f32> = (0..wshape.element_count()).map(|_| rng.gen_range(-lim..=lim)).collect();
            let bias = info.bias.as_ref().map(|b| {
                let v = (0..b.element_count()).map(|_| rng.gen_range(-lim..=lim)).collect();
                Tensor::new(b.clone(), v)
            });
            out.insert(
                layer.name.clone(),
                LayerWeights {
                    weight: Tensor::new(wshape.clone(), w),
                    bias,
                },
            );
        }
        out
    }

    /// Checks that every parametric layer has correctly shaped weights.
    pub fn check(&self, net: &NetworkGraph) -> Result<(), WeightsError> {
        for (layer, info) in net.layers().iter().zip(net.info()) {
            let Some(wshape) = &info.weight else { continue };
            let lw = self.get(&layer.name).ok_or_else(|| WeightsError::Missing(layer.name.clone()))?;
            if lw.weight.shape() != wshape {
                return Err(WeightsError::ShapeMismatch {
                    name: format!("{}.weight", layer.name),
                    expected: wshape.clone(),
                    got: lw.weight.shape().clone(),
                });
            }
            match (&info.bias, &lw.bias) {
                (Some(expected), Some(b)) if b.shape() != expected => {
                    return Err(WeightsError::ShapeMismatch {
                        name: format!("{}.bias", layer.name),
                        expected: expected.clone(),
                        got: b.shape().clone(),
                    })
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn to_entries(&self) -> Vec<Entry> {
        let mut out = Vec::new();
        for (name, lw) in &self.layers {
            out.push(Entry::Fp32(format!("{name}.weight"), lw.weight.clone()));
            if let Some(b) = &lw.bias {
                out.push(Entry::Fp32(format!("{name}.bias"), b.clone()));
            }
        }
        out
    }

    pub fn from_entries(entries: Vec<Entry>) -> Result<Self, WeightsError> {
        let mut weights: BTreeMap<String, Tensor> = BTreeMap::new();
        let mut biases: BTreeMap<String, Tensor> = BTreeMap::new();
        for e in entries {
            let Entry::Fp32(name, t) = e else {
                return Err(WeightsError::BadEntry(e.name().to_string(), "expected FP32".into()));
            };
            if let Some(layer) = name.strip_suffix(".weight") {
                weights.insert(layer.to_string(), t);
            } else if let Some(layer) = name.strip_suffix(".bias") {
                biases.insert(layer.to_string(), t);
            } else {
                return Err(WeightsError::BadEntry(name, "name must end in .weight or .bias".into()));
            }
        }
        let mut out = Weights::new();
        for (layer, weight) in weights {
            let bias = biases.remove(&layer);
            out.insert(layer, LayerWeights { weight, bias });
        }
        if let Some((orphan, _)) = biases.into_iter().next() {
            return Err(WeightsError::BadEntry(format!("{orphan}.bias"), "bias without weight".into()));
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WeightsError> {
        write_file(path.as_ref(), &encode_container(&self.to_entries()))
    }

    /// Loads a container and checks it against the network's shapes.
    pub fn load(path: impl AsRef<Path>, net: &NetworkGraph) -> Result<Self, WeightsError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|source| WeightsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let w = Weights::from_entries(decode_container(&bytes)?)?;
        w.check(net)?;
        Ok(w)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), WeightsError> {
    std::fs::write(path, bytes).map_err(|source| WeightsError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Fp32(String, Tensor),
    Int8(String, QuantizedTensor),
}

impl Entry {
    pub fn name(&self) -> &str {
        match self {
            Entry::Fp32(n, _) | Entry::Int8(n, _) => n,
        }
    }
}

/// Container entries for a quantized model.
pub fn quantized_entries(layers: &BTreeMap<String, QuantizedLayer>) -> Vec<Entry> {
    let mut out = Vec::new();
    for (name, ql) in layers {
        out.push(Entry::Int8(format!("{name}.weight"), ql.weight.clone()));
        if let Some(b) = &ql.bias {
            out.push(Entry::Int8(format!("{name}.bias"), b.clone()));
        }
    }
    out
}

pub fn encode_container(entries: &[Entry]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for e in entries {
        let name = e.name().as_bytes();
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name);
        let (dtype, shape) = match e {
            Entry::Fp32(_, t) => (DataType::Fp32, t.shape()),
            Entry::Int8(_, q) => (DataType::Int8, &q.shape),
        };
        out.push(dtype.code());
        out.push(shape.rank() as u8);
        for &d in shape.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match e {
            Entry::Fp32(_, t) => {
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Entry::Int8(_, q) => {
                out.extend_from_slice(&q.params.t_min.to_le_bytes());
                out.extend_from_slice(&q.params.t_max.to_le_bytes());
                out.extend_from_slice(&q.params.range_lp.to_le_bytes());
                out.extend_from_slice(&q.codes);
            }
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WeightsError> {
        if self.buf.len() - self.pos < n {
            return Err(WeightsError::Truncated(self.buf.len()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, WeightsError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, WeightsError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, WeightsError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32, WeightsError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn decode_container(bytes: &[u8]) -> Result<Vec<Entry>, WeightsError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4).map_err(|_| WeightsError::BadMagic)? != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(WeightsError::UnsupportedVersion(version));
    }
    let count = r.u32()?;
    let mut entries = Vec::with_capacity(count.min(1 << 16) as usize);
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| WeightsError::BadEntry("?".into(), "name is not UTF-8".into()))?;
        let code = r.u8()?;
        let dtype = DataType::from_code(code).ok_or(WeightsError::BadDtype(code))?;
        let rank = r.u8()? as usize;
        let dims = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let shape = TensorShape::new(dims).map_err(|e| WeightsError::BadEntry(name.clone(), e))?;
        let n = shape.element_count();
        match dtype {
            DataType::Fp32 => {
                let raw = r.take(n.checked_mul(4).ok_or(WeightsError::Truncated(bytes.len()))?)?;
                let data = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                entries.push(Entry::Fp32(name, Tensor::new(shape, data)));
            }
            DataType::Int8 => {
                let (t_min, t_max, range_lp) = (r.f32()?, r.f32()?, r.u32()?);
                let params = QuantParams::new(t_min, t_max, range_lp)
                    .map_err(|e| WeightsError::BadEntry(name.clone(), e.to_string()))?;
                let codes = r.take(n)?.to_vec();
                entries.push(Entry::Int8(name, QuantizedTensor::new(shape, codes, params)));
            }
        }
    }
    if r.pos != bytes.len() {
        return Err(WeightsError::BadEntry("<trailer>".into(), "trailing bytes after last entry".into()));
    }
    Ok(entries)
}

pub fn save_quantized(
    layers: &BTreeMap<String, QuantizedLayer>,
    path: impl AsRef<Path>,
) -> Result<(), WeightsError> {
    write_file(path.as_ref(), &encode_container(&quantized_entries(layers)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::bundled;
    use crate::quant::{quantize_weights, CalibrationPolicy};
    use crate::testnets;

    #[test]
    fn synthetic_is_seeded_and_bounded() {
        let net = testnets::toy_classifier();
        let a = Weights::synthetic(&net, 7);
        let b = Weights::synthetic(&net, 7);
        let c = Weights::synthetic(&net, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        a.check(&net).unwrap();
        for (_, lw) in a.iter() {
            assert!(lw.weight.data().iter().all(|v| v.abs() <= SYNTHETIC_WEIGHT_LIMIT));
        }
    }

    #[test]
    fn fp32_container_round_trip() {
        let net = testnets::toy_classifier();
        let w = Weights::synthetic(&net, 1);
        let bytes = encode_container(&w.to_entries());
        assert_eq!(&bytes[..4], b"SWNT");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        let back = Weights::from_entries(decode_container(&bytes).unwrap()).unwrap();
        assert_eq!(back, w);
    }

    #[test]
    fn int8_container_round_trip() {
        let net = testnets::toy_classifier();
        let w = Weights::synthetic(&net, 1);
        let q = quantize_weights(&net, &w, CalibrationPolicy::MinMax).unwrap();
        let entries = quantized_entries(&q);
        let bytes = encode_container(&entries);
        assert_eq!(decode_container(&bytes).unwrap(), entries);
    }

    #[test]
    fn entry_layout_is_exact() {
        let t = Tensor::from_vec(&[2], vec![1.0, -2.0]);
        let bytes = encode_container(&[Entry::Fp32("a.bias".into(), t)]);
        let mut expected = b"SWNT".to_vec();
        expected.extend_from_slice(&1u16.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&6u16.to_le_bytes());
        expected.extend_from_slice(b"a.bias");
        expected.extend_from_slice(&[0, 1]);
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-2.0f32).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn corrupt_containers_are_rejected() {
        assert!(matches!(decode_container(b"NOPE"), Err(WeightsError::BadMagic)));
        let net = testnets::toy_classifier();
        let bytes = encode_container(&Weights::synthetic(&net, 1).to_entries());
        assert!(matches!(decode_container(&bytes[..bytes.len() - 3]), Err(WeightsError::Truncated(_))));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(decode_container(&v2), Err(WeightsError::UnsupportedVersion(2))));
    }

    #[test]
    fn load_checks_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.swnt");
        let toy = testnets::toy_classifier();
        Weights::synthetic(&toy, 3).save(&path).unwrap();
        assert_eq!(Weights::load(&path, &toy).unwrap(), Weights::synthetic(&toy, 3));
        let other = bundled::load("alexnet").unwrap();
        assert!(Weights::load(&path, &other).is_err());
    }
}
