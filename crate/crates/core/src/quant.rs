//! Affine scalar quantization between FP32 values and unsigned 8-bit codes.
//!
//! A tensor is described by a clipping range `[t_min, t_max]` and the number
//! of low-precision steps `range_lp` (255 for INT8). Values map linearly onto
//! codes `0..=range_lp` with `t_min` at code 0:
//!
//! ```text
//! code  = round((x - t_min) / |t_max - t_min| * range_lp)   clamped to [0, range_lp]
//! value = |t_max - t_min| / range_lp * code + t_min
//! ```
//!
//! Rounding is half away from zero. Arithmetic runs in f64 and results are
//! narrowed to f32 at the end, so the code grid round-trips exactly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::graph::NetworkGraph;
use crate::tensor::{QuantizedTensor, Tensor};
use crate::weights::Weights;

/// Steps of an 8-bit code.
pub const INT8_RANGE: u32 = 255;

/// Half-width added on each side when every observed value is identical.
pub const DEGENERATE_WIDENING: f32 = 0.5;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum QuantError {
    #[error("no values observed during calibration")]
    EmptyCalibration,
    #[error("non-finite value {0} in quantizer input")]
    NonFiniteInput(f32),
    #[error("invalid thresholds: t_min={t_min} must be below t_max={t_max}")]
    InvalidRange { t_min: f32, t_max: f32 },
    #[error("range_lp={0} is not 2^bits - 1 for 1..=8 bits")]
    InvalidRangeLp(u32),
    #[error("percentile {0} outside (0.5, 1]")]
    InvalidPercentile(f64),
    #[error("layer `{0}` has no weights")]
    MissingWeights(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    pub t_min: f32,
    pub t_max: f32,
    pub range_lp: u32,
}

impl QuantParams {
    pub fn new(t_min: f32, t_max: f32, range_lp: u32) -> Result<Self, QuantError> {
        if !t_min.is_finite() || !t_max.is_finite() || t_min >= t_max {
            return Err(QuantError::InvalidRange { t_min, t_max });
        }
        if range_lp == 0 || range_lp > INT8_RANGE || !(range_lp + 1).is_power_of_two() {
            return Err(QuantError::InvalidRangeLp(range_lp));
        }
        Ok(QuantParams { t_min, t_max, range_lp })
    }

    pub fn int8(t_min: f32, t_max: f32) -> Result<Self, QuantError> {
        Self::new(t_min, t_max, INT8_RANGE)
    }

    /// Real-valued width of one code step.
    pub fn scale(&self) -> f64 {
        (self.t_max as f64 - self.t_min as f64).abs() / self.range_lp as f64
    }

    pub fn quantize_value(&self, x: f32) -> u8 {
        if x >= self.t_max {
            return self.range_lp as u8;
        }
        if x <= self.t_min {
            return 0;
        }
        let lo = self.t_min as f64;
        let width = (self.t_max as f64 - lo).abs();
        let q = ((x as f64 - lo) / width * self.range_lp as f64).round();
        q.clamp(0.0, self.range_lp as f64) as u8
    }

    pub fn dequantize_value(&self, code: u8) -> f32 {
        (self.scale() * code as f64 + self.t_min as f64) as f32
    }

    /// Largest |dequantize(quantize(x)) - x| for x inside the range.
    pub fn round_trip_bound(&self) -> f64 {
        self.scale() / 2.0
    }

    pub fn bit_eq(&self, other: &QuantParams) -> bool {
        self.t_min.to_bits() == other.t_min.to_bits()
            && self.t_max.to_bits() == other.t_max.to_bits()
            && self.range_lp == other.range_lp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum CalibrationPolicy {
    #[default]
    MinMax,
    /// Clip to the (1-p) and p quantiles of the observed values.
    Percentile(f64),
}

impl CalibrationPolicy {
    pub fn validate(&self) -> Result<(), QuantError> {
        match *self {
            CalibrationPolicy::Percentile(p) if !(p > 0.5 && p <= 1.0) => {
                Err(QuantError::InvalidPercentile(p))
            }
            _ => Ok(()),
        }
    }
}

impl std::str::FromStr for CalibrationPolicy {
    type Err = String;

    /// `minmax` or `percentile:0.999`.
    fn from_str(s: &str) -> Result<Self, String> {
        let lower = s.to_ascii_lowercase();
        if lower == "minmax" {
            return Ok(CalibrationPolicy::MinMax);
        }
        if let Some(p) = lower.strip_prefix("percentile:") {
            let p: f64 = p.parse().map_err(|_| format!("bad percentile `{p}`"))?;
            let policy = CalibrationPolicy::Percentile(p);
            policy.validate().map_err(|e| e.to_string())?;
            return Ok(policy);
        }
        Err(format!("unknown calibration policy `{s}` (expected minmax or percentile:P)"))
    }
}

/// Accumulates calibration statistics over a stream of tensors.
#[derive(Debug, Clone)]
pub struct Observer {
    policy: CalibrationPolicy,
    min: f32,
    max: f32,
    count: usize,
    samples: Vec<f32>,
}

impl Observer {
    pub fn new(policy: CalibrationPolicy) -> Self {
        Observer {
            policy,
            min: f32::INFINITY,
            max: f32::NEG_INFINITY,
            count: 0,
            samples: Vec::new(),
        }
    }

    pub fn observe(&mut self, values: &[f32]) -> Result<(), QuantError> {
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(QuantError::NonFiniteInput(bad));
        }
        for &v in values {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.count += values.len();
        if matches!(self.policy, CalibrationPolicy::Percentile(_)) {
            self.samples.extend_from_slice(values);
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<QuantParams, QuantError> {
        self.policy.validate()?;
        if self.count == 0 {
            return Err(QuantError::EmptyCalibration);
        }
        let (lo, hi) = match self.policy {
            CalibrationPolicy::MinMax => (self.min, self.max),
            CalibrationPolicy::Percentile(p) => {
                self.samples.sort_by(f32::total_cmp);
                let at = |q: f64| {
                    let idx = (q * (self.samples.len() - 1) as f64).round() as usize;
                    self.samples[idx.min(self.samples.len() - 1)]
                };
                (at(1.0 - p), at(p))
            }
        };
        if lo >= hi {
            return QuantParams::int8(lo - DEGENERATE_WIDENING, hi + DEGENERATE_WIDENING);
        }
        QuantParams::int8(lo, hi)
    }
}

/// Finds INT8 thresholds for the given values.
pub fn calibrate(values: &[f32], policy: CalibrationPolicy) -> Result<QuantParams, QuantError> {
    let mut obs = Observer::new(policy);
    obs.observe(values)?;
    obs.finish()
}

/// Calibrates over several tensors as if they were one stream.
pub fn calibrate_stream<'a>(
    tensors: impl IntoIterator<Item = &'a Tensor>,
    policy: CalibrationPolicy,
) -> Result<QuantParams, QuantError> {
    let mut obs = Observer::new(policy);
    for t in tensors {
        obs.observe(t.data())?;
    }
    obs.finish()
}

pub fn quantize(x: &Tensor, params: &QuantParams) -> Result<QuantizedTensor, QuantError> {
    let mut codes = Vec::with_capacity(x.data().len());
    for &v in x.data() {
        if !v.is_finite() {
            return Err(QuantError::NonFiniteInput(v));
        }
        codes.push(params.quantize_value(v));
    }
    Ok(QuantizedTensor::new(x.shape().clone(), codes, *params))
}

pub fn dequantize(q: &QuantizedTensor) -> Tensor {
    let data = q.codes.iter().map(|&c| q.params.dequantize_value(c)).collect();
    Tensor::new(q.shape.clone(), data)
}

/// INT8 weights of one parametric layer. Weights and bias share one set of
/// thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLayer {
    pub weight: QuantizedTensor,
    pub bias: Option<QuantizedTensor>,
    pub params: QuantParams,
}

/// Per-tensor quantization of every parametric layer's weights and bias.
///
/// Thresholds are calibrated over the weights and bias together so that no
/// bias value is clipped.
pub fn quantize_weights(
    net: &NetworkGraph,
    weights: &Weights,
    policy: CalibrationPolicy,
) -> Result<BTreeMap<String, QuantizedLayer>, QuantError> {
    let mut out = BTreeMap::new();
    for layer in net.layers().iter().filter(|l| l.is_parametric()) {
        let lw = weights
            .get(&layer.name)
            .ok_or_else(|| QuantError::MissingWeights(layer.name.clone()))?;
        out.insert(layer.name.clone(), quantize_layer(&lw.weight, lw.bias.as_ref(), policy)?);
    }
    Ok(out)
}

pub fn quantize_layer(
    weight: &Tensor,
    bias: Option<&Tensor>,
    policy: CalibrationPolicy,
) -> Result<QuantizedLayer, QuantError> {
    let params = calibrate_stream(std::iter::once(weight).chain(bias), policy)?;
    Ok(QuantizedLayer {
        weight: quantize(weight, &params)?,
        bias: bias.map(|b| quantize(b, &params)).transpose()?,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(lo: f32, hi: f32) -> QuantParams {
        QuantParams::int8(lo, hi).unwrap()
    }

    #[test]
    fn minmax_thresholds() {
        let q = calibrate(&[-1.0, 0.0, 2.0], CalibrationPolicy::MinMax).unwrap();
        assert_eq!((q.t_min, q.t_max, q.range_lp), (-1.0, 2.0, 255));
    }

    #[test]
    fn constant_input_widens() {
        let q = calibrate(&[3.0; 16], CalibrationPolicy::MinMax).unwrap();
        assert_eq!((q.t_min, q.t_max), (2.5, 3.5));
    }

    #[test]
    fn percentile_matches_sorted_index_oracle() {
        let n = 10_001;
        let values: Vec<f32> = (0..n).map(|i| -1.0 + 2.0 * i as f32 / (n - 1) as f32).collect();
        // oracle: sort, then take the element at round(q * (n-1))
        let mut sorted = values.clone();
        sorted.sort_by(f32::total_cmp);
        let hi = sorted[(0.99 * (n - 1) as f64).round() as usize];
        let lo = sorted[(0.01 * (n - 1) as f64).round() as usize];
        let q = calibrate(&values, CalibrationPolicy::Percentile(0.99)).unwrap();
        assert_eq!((q.t_min, q.t_max), (lo, hi));
        assert!((q.t_max - 0.98).abs() < 1e-4 && (q.t_min + 0.98).abs() < 1e-4);
    }

    #[test]
    fn calibration_errors() {
        assert_eq!(calibrate(&[], CalibrationPolicy::MinMax), Err(QuantError::EmptyCalibration));
        assert!(matches!(
            calibrate(&[1.0, f32::NAN], CalibrationPolicy::MinMax),
            Err(QuantError::NonFiniteInput(_))
        ));
        assert_eq!(
            calibrate(&[1.0, 2.0], CalibrationPolicy::Percentile(0.4)),
            Err(QuantError::InvalidPercentile(0.4))
        );
    }

    #[test]
    fn params_validation() {
        assert!(QuantParams::int8(1.0, 1.0).is_err());
        assert!(QuantParams::int8(2.0, 1.0).is_err());
        assert!(QuantParams::new(0.0, 1.0, 100).is_err());
        assert!(QuantParams::new(0.0, 1.0, 15).is_ok());
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("minmax".parse::<CalibrationPolicy>().unwrap(), CalibrationPolicy::MinMax);
        assert_eq!(
            "percentile:0.999".parse::<CalibrationPolicy>().unwrap(),
            CalibrationPolicy::Percentile(0.999)
        );
        assert!("percentile:0.2".parse::<CalibrationPolicy>().is_err());
        assert!("kl".parse::<CalibrationPolicy>().is_err());
    }

    #[test]
    fn clamp_branches() {
        let q = p(-1.0, 1.0);
        assert_eq!(q.quantize_value(1.5), 255);
        assert_eq!(q.quantize_value(-1.0), 0);
        assert_eq!(q.quantize_value(-7.0), 0);
    }

    #[test]
    fn midpoint_rounds_half_away() {
        // (0 - (-1)) / 2 * 255 = 127.5 -> 128
        assert_eq!(p(-1.0, 1.0).quantize_value(0.0), 128);
    }

    #[test]
    fn dequantize_endpoints() {
        let q = p(-1.0, 1.0);
        assert_eq!(q.dequantize_value(255), 1.0);
        assert_eq!(q.dequantize_value(0), -1.0);
        let mid = q.dequantize_value(128) as f64;
        assert!((mid - (2.0 / 255.0 * 128.0 - 1.0)).abs() < 1e-7);
        assert!((mid - 0.003922).abs() < 1e-6);
    }

    #[test]
    fn nan_is_rejected() {
        let t = Tensor::from_vec(&[2], vec![0.0, f32::INFINITY]);
        assert!(matches!(quantize(&t, &p(-1.0, 1.0)), Err(QuantError::NonFiniteInput(_))));
    }

    #[test]
    fn zero_weights_widen_to_code_128() {
        let w = Tensor::from_vec(&[2, 3], vec![0.0; 6]);
        let b = Tensor::from_vec(&[2], vec![0.0; 2]);
        let ql = quantize_layer(&w, Some(&b), CalibrationPolicy::MinMax).unwrap();
        assert_eq!((ql.params.t_min, ql.params.t_max), (-0.5, 0.5));
        assert!(ql.weight.codes.iter().all(|&c| c == 128));
        assert!(ql.bias.unwrap().codes.iter().all(|&c| c == 128));
    }

    #[test]
    fn weights_spanning_half_unit() {
        let w = Tensor::from_vec(&[4], vec![-0.5, 0.1, 0.5, 0.0]);
        let ql = quantize_layer(&w, None, CalibrationPolicy::MinMax).unwrap();
        assert_eq!((ql.params.t_min, ql.params.t_max), (-0.5, 0.5));
    }

    #[test]
    fn code_grid_is_idempotent() {
        for q in [p(-1.0, 1.0), p(0.0, 6.0), p(-0.1, 0.1), p(-123.4, 0.5)] {
            for code in 0..=255u8 {
                assert_eq!(q.quantize_value(q.dequantize_value(code)), code);
            }
        }
    }

    proptest! {
        #[test]
        fn round_trip_within_half_step(lo in -100.0f32..100.0, width in 1e-3f32..50.0, t in 0.0f64..=1.0) {
            let q = p(lo, lo + width);
            let x = (q.t_min as f64 + t * (q.t_max as f64 - q.t_min as f64)) as f32;
            prop_assume!(x >= q.t_min && x <= q.t_max);
            let back = q.dequantize_value(q.quantize_value(x)) as f64;
            let tol = q.round_trip_bound() + 1e-6 * (1.0 + (x as f64).abs());
            prop_assert!((back - x as f64).abs() <= tol);
        }

        #[test]
        fn quantize_is_monotone(a in -10.0f32..10.0, b in -10.0f32..10.0) {
            let q = p(-3.0, 7.0);
            let (x, y) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(q.quantize_value(x) <= q.quantize_value(y));
        }

        #[test]
        fn minmax_never_clips_interior(values in proptest::collection::vec(-5.0f32..5.0, 2..64)) {
            let q = calibrate(&values, CalibrationPolicy::MinMax).unwrap();
            for &v in &values {
                let code = q.quantize_value(v);
                if v > q.t_min && v < q.t_max {
                    let exact = (v as f64 - q.t_min as f64) / (q.t_max as f64 - q.t_min as f64) * 255.0;
                    prop_assert_eq!(code as f64, exact.round());
                }
            }
        }
    }
}
