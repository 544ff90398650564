//! Reference FP32 and INT8 execution of (sub-)networks.
//!
//! An INT8 engine runs every parametric layer on codes:
//!
//! 1. quantize the layer input with its producer's activation thresholds;
//! 2. accumulate code products in i32 with the affine-offset correction;
//! 3. map the accumulator back to FP32;
//! 4. run the following non-parametric layers (activation, pooling, LRN,
//!    joins, softmax) in FP32;
//! 5. the next parametric layer re-quantizes its input, step 1 again.
//!
//! Sub-network outputs leave an INT8 engine as INT8 blobs, except outputs
//! that are also consumed inside the engine (or are the raw graph input);
//! those are shipped as FP32.

pub mod kernels;

use std::collections::{BTreeMap, HashMap};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::graph::{DataType, LayerKind, LayerSpec, NetworkGraph, TensorShape};
use crate::quant::{self, CalibrationPolicy, Observer, QuantError, QuantParams};
use crate::tensor::{Blob, QuantizedTensor, Tensor};
use crate::weights::Weights;
use kernels::{ConvGeometry, Int8Operand};

#[derive(Debug, thiserror::Error)]
pub enum ExecError {
    #[error("`{name}`: expected shape {expected}, got {got}")]
    ShapeMismatch {
        name: String,
        expected: TensorShape,
        got: TensorShape,
    },
    #[error("expected {expected} input tensors, got {got}")]
    InputCount { expected: usize, got: usize },
    #[error("engine has {0} outputs; use `SubnetEngine::run` for multi-output engines")]
    OutputCount(usize),
    #[error("no activation thresholds for `{0}`")]
    MissingQuantParams(String),
    #[error("no weights for layer `{0}`")]
    MissingWeights(String),
    #[error("engine precision is {actual}, operation needs {expected}")]
    Precision { expected: DataType, actual: DataType },
    #[error("boundary mismatch: expected {expected}, got {got}")]
    BoundaryMismatch { expected: String, got: String },
    #[error(transparent)]
    Quant(#[from] QuantError),
}

/// Activation thresholds keyed by producer name (graph input or layer).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActivationParams(pub BTreeMap<String, QuantParams>);

impl ActivationParams {
    pub fn get(&self, name: &str) -> Option<&QuantParams> {
        self.0.get(name)
    }
}

#[derive(Debug, Clone)]
struct Fp32Layer {
    weight: Tensor,
    bias: Option<Vec<f32>>,
}

#[derive(Debug, Clone)]
struct Int8Layer {
    weight: QuantizedTensor,
    /// Bias dequantized once at build time.
    bias: Option<Vec<f32>>,
    w_sums: Vec<i32>,
}

#[derive(Debug, Clone)]
enum LayerParams {
    Fp32(Fp32Layer),
    Int8(Int8Layer),
}

/// An immutable, ready-to-run sub-network at one precision.
#[derive(Debug, Clone)]
pub struct SubnetEngine {
    graph: NetworkGraph,
    precision: DataType,
    params: HashMap<String, LayerParams>,
    activations: ActivationParams,
}

impl SubnetEngine {
    pub fn fp32(graph: NetworkGraph, weights: &Weights) -> Result<Self, ExecError> {
        let mut params = HashMap::new();
        for l in graph.layers().iter().filter(|l| l.is_parametric()) {
            let lw = weights.get(&l.name).ok_or_else(|| ExecError::MissingWeights(l.name.clone()))?;
            params.insert(
                l.name.clone(),
                LayerParams::Fp32(Fp32Layer {
                    weight: lw.weight.clone(),
                    bias: lw.bias.as_ref().map(|b| b.data().to_vec()),
                }),
            );
        }
        Ok(SubnetEngine {
            graph,
            precision: DataType::Fp32,
            params,
            activations: ActivationParams::default(),
        })
    }

    /// Quantizes the weights of every parametric layer in `graph` and keeps
    /// the activation thresholds needed to run it.
    pub fn int8(
        graph: NetworkGraph,
        weights: &Weights,
        activations: &ActivationParams,
        policy: CalibrationPolicy,
    ) -> Result<Self, ExecError> {
        let mut params = HashMap::new();
        let mut needed: Vec<String> = Vec::new();
        for l in graph.layers().iter().filter(|l| l.is_parametric()) {
            let lw = weights.get(&l.name).ok_or_else(|| ExecError::MissingWeights(l.name.clone()))?;
            let ql = quant::quantize_layer(&lw.weight, lw.bias.as_ref(), policy)?;
            let out = ql.weight.shape.dims()[0];
            params.insert(
                l.name.clone(),
                LayerParams::Int8(Int8Layer {
                    w_sums: kernels::weight_code_sums(&ql.weight.codes, out),
                    bias: ql.bias.as_ref().map(|b| quant::dequantize(b).into_data()),
                    weight: ql.weight,
                }),
            );
            needed.push(l.inputs[0].clone());
        }
        let mut engine = SubnetEngine {
            graph,
            precision: DataType::Int8,
            params,
            activations: ActivationParams::default(),
        };
        let outputs: Vec<String> = engine
            .graph
            .outputs()
            .iter()
            .filter(|o| engine.output_dtype(o) == DataType::Int8)
            .cloned()
            .collect();
        let mut kept = BTreeMap::new();
        for name in needed.iter().chain(&outputs) {
            let p = activations
                .get(name)
                .ok_or_else(|| ExecError::MissingQuantParams(name.clone()))?;
            kept.insert(name.clone(), *p);
        }
        engine.activations = ActivationParams(kept);
        Ok(engine)
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn precision(&self) -> DataType {
        self.precision
    }

    pub fn activations(&self) -> &ActivationParams {
        &self.activations
    }

    /// How a graph output leaves this engine.
    pub fn output_dtype(&self, name: &str) -> DataType {
        if self.precision == DataType::Fp32
            || self.graph.is_input(name)
            || !self.graph.consumers(name).is_empty()
        {
            DataType::Fp32
        } else {
            DataType::Int8
        }
    }

    pub fn run(&self, inputs: &[Tensor]) -> Result<Vec<Tensor>, ExecError> {
        self.run_observed(inputs, |_, _, _| {})
    }

    /// Runs the engine, reporting each layer's output and compute time.
    pub fn run_observed(
        &self,
        inputs: &[Tensor],
        mut observe: impl FnMut(&LayerSpec, &Tensor, Duration),
    ) -> Result<Vec<Tensor>, ExecError> {
        let graph_inputs = self.graph.inputs();
        if inputs.len() != graph_inputs.len() {
            return Err(ExecError::InputCount {
                expected: graph_inputs.len(),
                got: inputs.len(),
            });
        }
        let mut values: HashMap<&str, Tensor> = HashMap::new();
        for (gi, t) in graph_inputs.iter().zip(inputs) {
            if t.shape() != &gi.shape {
                return Err(ExecError::ShapeMismatch {
                    name: gi.name.clone(),
                    expected: gi.shape.clone(),
                    got: t.shape().clone(),
                });
            }
            values.insert(&gi.name, t.clone());
        }
        let mut quantized: HashMap<&str, QuantizedTensor> = HashMap::new();
        for (layer, info) in self.graph.layers().iter().zip(self.graph.info()) {
            let start = Instant::now();
            let data = self.run_layer(layer, &info.output, &values, &mut quantized)?;
            let t = Tensor::new(info.output.clone(), data);
            observe(layer, &t, start.elapsed());
            values.insert(&layer.name, t);
        }
        Ok(self
            .graph
            .outputs()
            .iter()
            .map(|o| values[o.as_str()].clone())
            .collect())
    }

    fn run_layer<'g>(
        &'g self,
        layer: &'g LayerSpec,
        out_shape: &TensorShape,
        values: &HashMap<&str, Tensor>,
        quantized: &mut HashMap<&'g str, QuantizedTensor>,
    ) -> Result<Vec<f32>, ExecError> {
        let src = &values[layer.inputs[0].as_str()];
        let h = &layer.hyper;
        Ok(match layer.kind {
            LayerKind::Convolution | LayerKind::FullyConnected => {
                let out_f = out_shape.dims()[1];
                match &self.params[&layer.name] {
                    LayerParams::Fp32(p) => {
                        let bias = p.bias.as_deref();
                        if layer.kind == LayerKind::Convolution {
                            let g = ConvGeometry::new(src.shape(), out_shape, h);
                            kernels::conv2d_f32(src.data(), p.weight.data(), bias, &g)
                        } else {
                            kernels::fc_f32(src.data(), p.weight.data(), bias, out_f)
                        }
                    }
                    LayerParams::Int8(p) => {
                        let producer = layer.inputs[0].as_str();
                        if !quantized.contains_key(producer) {
                            let xp = self
                                .activations
                                .get(producer)
                                .ok_or_else(|| ExecError::MissingQuantParams(producer.to_string()))?;
                            quantized.insert(producer, quant::quantize(src, xp)?);
                        }
                        let xq = &quantized[producer];
                        let x = Int8Operand { codes: &xq.codes, params: &xq.params };
                        let w = Int8Operand { codes: &p.weight.codes, params: &p.weight.params };
                        let bias = p.bias.as_deref();
                        if layer.kind == LayerKind::Convolution {
                            let g = ConvGeometry::new(src.shape(), out_shape, h);
                            kernels::conv2d_int8(x, w, &p.w_sums, bias, &g)
                        } else {
                            kernels::fc_int8(x, w, &p.w_sums, bias, out_f)
                        }
                    }
                }
            }
            LayerKind::ReLU => {
                let mut v = src.data().to_vec();
                kernels::relu(&mut v);
                v
            }
            LayerKind::MaxPool | LayerKind::AvgPool => {
                kernels::pool(src.data(), src.shape(), out_shape, h, layer.kind == LayerKind::MaxPool)
            }
            LayerKind::LRN => kernels::lrn(src.data(), src.shape(), h),
            LayerKind::Dropout => src.data().to_vec(),
            LayerKind::Softmax => kernels::softmax(src.data()),
            LayerKind::Concat | LayerKind::EltwiseAdd => {
                let parts: Vec<&[f32]> = layer.inputs.iter().map(|i| values[i.as_str()].data()).collect();
                if layer.kind == LayerKind::Concat {
                    kernels::concat(&parts)
                } else {
                    kernels::add(&parts)
                }
            }
        })
    }

    /// Packages output tensors as the blobs this engine transmits.
    pub fn emit_blobs(&self, outputs: Vec<Tensor>) -> Result<Vec<Blob>, ExecError> {
        let names = self.graph.outputs();
        if outputs.len() != names.len() {
            return Err(ExecError::BoundaryMismatch {
                expected: format!("{} output tensors", names.len()),
                got: format!("{}", outputs.len()),
            });
        }
        names
            .iter()
            .zip(outputs)
            .map(|(name, t)| match self.output_dtype(name) {
                DataType::Fp32 => Ok(Blob::Fp32(t)),
                DataType::Int8 => {
                    let p = self
                        .activations
                        .get(name)
                        .ok_or_else(|| ExecError::MissingQuantParams(name.clone()))?;
                    Ok(Blob::Int8(quant::quantize(&t, p)?))
                }
            })
            .collect()
    }

    /// Checks received blobs against this engine's inputs and converts them
    /// to FP32, dequantizing INT8 blobs.
    pub fn accept_blobs(&self, blobs: &[Blob]) -> Result<Vec<Tensor>, ExecError> {
        let expected = self.graph.inputs();
        if blobs.len() != expected.len() {
            return Err(ExecError::BoundaryMismatch {
                expected: format!("{} blobs", expected.len()),
                got: format!("{} blobs", blobs.len()),
            });
        }
        for (gi, b) in expected.iter().zip(blobs) {
            if b.shape() != &gi.shape {
                return Err(ExecError::BoundaryMismatch {
                    expected: format!("`{}` with shape {}", gi.name, gi.shape),
                    got: format!("shape {}", b.shape()),
                });
            }
        }
        Ok(blobs.iter().map(Blob::to_tensor).collect())
    }

    fn single(outputs: Vec<Tensor>) -> Result<Tensor, ExecError> {
        if outputs.len() != 1 {
            return Err(ExecError::OutputCount(outputs.len()));
        }
        Ok(outputs.into_iter().next().unwrap())
    }

    fn require(&self, precision: DataType) -> Result<(), ExecError> {
        if self.precision != precision {
            return Err(ExecError::Precision {
                expected: precision,
                actual: self.precision,
            });
        }
        Ok(())
    }
}

/// Full-precision run of a single-input, single-output engine.
pub fn run_fp32(engine: &SubnetEngine, input: &Tensor) -> Result<Tensor, ExecError> {
    engine.require(DataType::Fp32)?;
    SubnetEngine::single(engine.run(std::slice::from_ref(input))?)
}

/// Mixed-precision run: parametric layers on INT8 codes, everything else in
/// FP32. Returns the FP32 output before transmission encoding.
pub fn run_int8(engine: &SubnetEngine, input: &Tensor) -> Result<Tensor, ExecError> {
    engine.require(DataType::Int8)?;
    SubnetEngine::single(engine.run(std::slice::from_ref(input))?)
}

/// Edge engine, blob encoding, cloud engine, all in-process. The result is
/// what the cloud ends up holding.
pub fn run_collaborative(
    edge: &SubnetEngine,
    cloud: &SubnetEngine,
    input: &Tensor,
) -> Result<Tensor, ExecError> {
    check_boundary(edge, cloud)?;
    let blobs = edge.emit_blobs(edge.run(std::slice::from_ref(input))?)?;
    let received = cloud.accept_blobs(&blobs)?;
    SubnetEngine::single(cloud.run(&received)?)
}

/// The edge engine's outputs must be exactly the cloud engine's inputs.
pub fn check_boundary(edge: &SubnetEngine, cloud: &SubnetEngine) -> Result<(), ExecError> {
    let sent: Vec<&str> = edge.graph.outputs().iter().map(String::as_str).collect();
    let wanted: Vec<&str> = cloud.graph.inputs().iter().map(|i| i.name.as_str()).collect();
    if sent != wanted {
        return Err(ExecError::BoundaryMismatch {
            expected: format!("{wanted:?}"),
            got: format!("{sent:?}"),
        });
    }
    Ok(())
}

/// Runs the whole FP32 network over a calibration batch and derives
/// thresholds for the graph input and every layer output.
pub fn calibrate_activations(
    net: &NetworkGraph,
    weights: &Weights,
    batch: &[Tensor],
    policy: CalibrationPolicy,
) -> Result<ActivationParams, ExecError> {
    let engine = SubnetEngine::fp32(net.clone(), weights)?;
    let mut observers: BTreeMap<String, Observer> = BTreeMap::new();
    let input_name = net.inputs()[0].name.clone();
    for x in batch {
        observers
            .entry(input_name.clone())
            .or_insert_with(|| Observer::new(policy))
            .observe(x.data())?;
        let mut err = None;
        engine.run_observed(std::slice::from_ref(x), |layer, t, _| {
            let obs = observers
                .entry(layer.name.clone())
                .or_insert_with(|| Observer::new(policy));
            if let Err(e) = obs.observe(t.data()) {
                err.get_or_insert(e);
            }
        })?;
        if let Some(e) = err {
            return Err(e.into());
        }
    }
    let mut out = BTreeMap::new();
    for (name, obs) in observers {
        out.insert(name, obs.finish()?);
    }
    Ok(ActivationParams(out))
}
