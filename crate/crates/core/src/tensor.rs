use crate::graph::{DataType, TensorShape};
use crate::quant::QuantParams;

/// Dense FP32 tensor in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: TensorShape,
    data: Vec<f32>,
}

impl Tensor {
    /// Panics if `data.len()` does not match the shape.
    pub fn new(shape: TensorShape, data: Vec<f32>) -> Self {
        assert_eq!(
            shape.element_count(),
            data.len(),
            "payload length does not match shape {shape}"
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: TensorShape) -> Self {
        let n = shape.element_count();
        Tensor::new(shape, vec![0.0; n])
    }

    pub fn from_vec(dims: &[usize], data: Vec<f32>) -> Self {
        Tensor::new(TensorShape::new(dims.to_vec()).expect("valid dims"), data)
    }

    pub fn shape(&self) -> &TensorShape {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    /// Bitwise equality, so NaN payloads and signed zeros compare exactly.
    pub fn bit_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Unsigned 8-bit codes plus the thresholds that give them meaning.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub shape: TensorShape,
    pub codes: Vec<u8>,
    pub params: QuantParams,
}

impl QuantizedTensor {
    pub fn new(shape: TensorShape, codes: Vec<u8>, params: QuantParams) -> Self {
        assert_eq!(shape.element_count(), codes.len());
        QuantizedTensor { shape, codes, params }
    }
}

/// One boundary tensor as it crosses the link.
#[derive(Debug, Clone, PartialEq)]
pub enum Blob {
    Fp32(Tensor),
    Int8(QuantizedTensor),
}

impl Blob {
    pub fn dtype(&self) -> DataType {
        match self {
            Blob::Fp32(_) => DataType::Fp32,
            Blob::Int8(_) => DataType::Int8,
        }
    }

    pub fn shape(&self) -> &TensorShape {
        match self {
            Blob::Fp32(t) => t.shape(),
            Blob::Int8(q) => &q.shape,
        }
    }

    /// Converts to FP32, dequantizing INT8 codes.
    pub fn to_tensor(&self) -> Tensor {
        match self {
            Blob::Fp32(t) => t.clone(),
            Blob::Int8(q) => crate::quant::dequantize(q),
        }
    }

    /// Bitwise comparison for FP32 payloads; INT8 compares codes and params.
    pub fn bit_eq(&self, other: &Blob) -> bool {
        match (self, other) {
            (Blob::Fp32(a), Blob::Fp32(b)) => a.bit_eq(b),
            (Blob::Int8(a), Blob::Int8(b)) => {
                a.shape == b.shape && a.codes == b.codes && a.params.bit_eq(&b.params)
            }
            _ => false,
        }
    }
}
