//! `SWBL` boundary messages.
//!
//! ```text
//! "SWBL"  u16 version  u8 blob_count
//! per blob:
//!   u8 dtype (0 = FP32, 1 = INT8)  u8 rank  u32 dims[rank]
//!   INT8 only: f32 t_min  f32 t_max  u32 range_lp
//!   payload (f32 LE values or u8 codes)
//! u32 CRC-32 of everything above
//! ```
//!
//! All integers and floats are little-endian.

use crate::graph::{DataType, TensorShape};
use crate::partition::BlobDescriptor;
use crate::quant::QuantParams;
use crate::tensor::{Blob, QuantizedTensor, Tensor};

pub const MAGIC: &[u8; 4] = b"SWBL";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 7;
pub const TRAILER_LEN: usize = 4;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum WireError {
    #[error("a message needs at least one blob")]
    Empty,
    #[error("{0} blobs do not fit the u8 blob count")]
    TooManyBlobs(usize),
    #[error("message truncated at byte {0}")]
    Truncated(usize),
    #[error("bad magic {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    Version(u16),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumError { stored: u32, computed: u32 },
    #[error("unknown dtype code {0}")]
    BadDtype(u8),
    #[error("invalid blob shape: {0}")]
    BadShape(String),
    #[error("invalid quantization parameters: {0}")]
    BadQuantParams(String),
    #[error("{0} unused bytes before the checksum")]
    Trailing(usize),
}

/// Bytes one blob occupies on the wire, header included.
pub fn blob_len(desc: &BlobDescriptor) -> usize {
    2 + 4 * desc.shape.rank() + desc.byte_size
}

/// Exact encoded length of a message carrying these blobs.
pub fn message_len(blobs: &[BlobDescriptor]) -> usize {
    HEADER_LEN + blobs.iter().map(blob_len).sum::<usize>() + TRAILER_LEN
}

pub fn encode(blobs: &[Blob]) -> Result<Vec<u8>, WireError> {
    if blobs.is_empty() {
        return Err(WireError::Empty);
    }
    let count = u8::try_from(blobs.len()).map_err(|_| WireError::TooManyBlobs(blobs.len()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(count);
    for b in blobs {
        out.push(b.dtype().code());
        let dims = b.shape().dims();
        out.push(dims.len() as u8);
        for &d in dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        match b {
            Blob::Fp32(t) => {
                for v in t.data() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Blob::Int8(q) => {
                out.extend_from_slice(&q.params.t_min.to_le_bytes());
                out.extend_from_slice(&q.params.t_max.to_le_bytes());
                out.extend_from_slice(&q.params.range_lp.to_le_bytes());
                out.extend_from_slice(&q.codes);
            }
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(WireError::Truncated(self.bytes.len()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, WireError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Verifies the checksum, then parses every blob.
pub fn decode(bytes: &[u8]) -> Result<Vec<Blob>, WireError> {
    if bytes.len() < HEADER_LEN + TRAILER_LEN {
        return Err(WireError::Truncated(bytes.len()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - TRAILER_LEN);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(WireError::ChecksumError { stored, computed });
    }
    let mut r = Reader { bytes: body, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(WireError::Version(version));
    }
    let count = r.u8()?;
    let mut blobs = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let code = r.u8()?;
        let dtype = DataType::from_code(code).ok_or(WireError::BadDtype(code))?;
        let rank = r.u8()?;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let shape = TensorShape::new(dims).map_err(WireError::BadShape)?;
        let n = shape.element_count();
        blobs.push(match dtype {
            DataType::Fp32 => {
                let raw = r.take(n.checked_mul(4).ok_or(WireError::Truncated(body.len()))?)?;
                let data = raw
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect();
                Blob::Fp32(Tensor::new(shape, data))
            }
            DataType::Int8 => {
                let (t_min, t_max, range_lp) = (r.f32()?, r.f32()?, r.u32()?);
                let params = QuantParams::new(t_min, t_max, range_lp)
                    .map_err(|e| WireError::BadQuantParams(e.to_string()))?;
                let codes = r.take(n)?.to_vec();
                if let Some(&c) = codes.iter().find(|&&c| c as u32 > range_lp) {
                    return Err(WireError::BadQuantParams(format!("code {c} above range_lp {range_lp}")));
                }
                Blob::Int8(QuantizedTensor::new(shape, codes, params))
            }
        });
    }
    if r.pos != body.len() {
        return Err(WireError::Trailing(body.len() - r.pos));
    }
    Ok(blobs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(d: &[usize]) -> TensorShape {
        TensorShape::new(d.to_vec()).unwrap()
    }

    #[test]
    fn int8_blob_length() {
        let d = BlobDescriptor::new("pool1", shape(&[1, 96, 27, 27]), DataType::Int8);
        assert_eq!(d.byte_size, 69_984 + 12);
        // 7 header + 1 dtype + 1 rank + 16 dims + 69,996 + 4 crc
        assert_eq!(message_len(&[d]), 70_025);
    }

    #[test]
    fn fp32_scalar_round_trip() {
        let t = Tensor::from_vec(&[1], vec![-0.0]);
        let bytes = encode(&[Blob::Fp32(t.clone())]).unwrap();
        assert_eq!(bytes.len(), 7 + 2 + 4 + 4 + 4);
        let back = decode(&bytes).unwrap();
        assert!(back[0].bit_eq(&Blob::Fp32(t)));
    }

    #[test]
    fn encoded_length_matches_descriptor() {
        let q = QuantizedTensor::new(shape(&[2, 3]), vec![0, 1, 2, 3, 254, 255], QuantParams::int8(-1.0, 1.0).unwrap());
        let t = Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]);
        let blobs = [Blob::Int8(q), Blob::Fp32(t)];
        let descs = [
            BlobDescriptor::new("a", shape(&[2, 3]), DataType::Int8),
            BlobDescriptor::new("b", shape(&[3]), DataType::Fp32),
        ];
        let bytes = encode(&blobs).unwrap();
        assert_eq!(bytes.len(), message_len(&descs));
        assert_eq!(&bytes[..4], b"SWBL");
        assert_eq!(decode(&bytes).unwrap(), blobs);
    }

    #[test]
    fn corruption_and_framing_errors() {
        let bytes = encode(&[Blob::Fp32(Tensor::from_vec(&[2], vec![1.0, 2.0]))]).unwrap();
        let mut bad = bytes.clone();
        bad[9] ^= 0x40;
        assert!(matches!(decode(&bad), Err(WireError::ChecksumError { .. })));
        assert!(matches!(decode(&bytes[..5]), Err(WireError::Truncated(_))));
        assert_eq!(encode(&[]), Err(WireError::Empty));

        // a valid checksum over a bad version
        let mut body = bytes[..bytes.len() - 4].to_vec();
        body[4] = 9;
        let crc = crc32fast::hash(&body);
        body.extend_from_slice(&crc.to_le_bytes());
        assert_eq!(decode(&body), Err(WireError::Version(9)));
    }
}
