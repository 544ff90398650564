//! Shared fixtures for the benchmarks.

use splitwire::exec::kernels::ConvGeometry;
use splitwire::graph::TensorShape;
use splitwire::quant::{self, CalibrationPolicy, QuantParams};
use splitwire::synth::{self, Stream};
use splitwire::Tensor;

/// One convolution with FP32 and INT8 copies of the same operands.
pub struct ConvCase {
    pub geometry: ConvGeometry,
    pub x: Vec<f32>,
    pub w: Vec<f32>,
    pub bias: Vec<f32>,
    pub x_codes: Vec<u8>,
    pub x_params: QuantParams,
    pub w_codes: Vec<u8>,
    pub w_params: QuantParams,
}

fn seeded(dims: &[usize], seed: u64) -> Tensor {
    let shape = TensorShape::new(dims.to_vec()).expect("non-empty shape");
    synth::inputs(&shape, seed, Stream::Inputs, 1).remove(0)
}

fn to_int8(t: &Tensor) -> (Vec<u8>, QuantParams) {
    let params = quant::calibrate(t.data(), CalibrationPolicy::MinMax).expect("finite data");
    let q = quant::quantize(t, &params).expect("valid params");
    (q.codes, params)
}

impl ConvCase {
    /// `k`x`k` convolution, stride 1, same padding, on a `c`-channel `hw`x`hw`
    /// input.
    pub fn new(c_in: usize, c_out: usize, hw: usize, k: usize) -> ConvCase {
        let pad = k / 2;
        let geometry = ConvGeometry {
            in_c: c_in,
            in_h: hw,
            in_w: hw,
            out_c: c_out,
            out_h: hw + 2 * pad - k + 1,
            out_w: hw + 2 * pad - k + 1,
            kernel: [k, k],
            stride: [1, 1],
            pad: [pad, pad],
            groups: 1,
        };
        let x = seeded(&[1, c_in, hw, hw], 1);
        let w = seeded(&[c_out, c_in, k, k], 2);
        let (x_codes, x_params) = to_int8(&x);
        let (w_codes, w_params) = to_int8(&w);
        ConvCase {
            geometry,
            bias: seeded(&[c_out], 3).into_data(),
            x: x.into_data(),
            w: w.into_data(),
            x_codes,
            x_params,
            w_codes,
            w_params,
        }
    }
}
