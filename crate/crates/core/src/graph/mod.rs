//! Network topology: layer specs, validation, shape inference and the
//! structural queries used by the partition rules.

mod schema;
mod shape;
mod structure;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use schema::{from_json_str, to_json_string};
pub use shape::{conv_output_dim, pool_output_dim};
pub use structure::{Region, RegionKind, Structure};

/// Name reserved for the virtual pure-cloud partition point.
pub const CLOUD_ONLY: &str = "cloud-only";

#[derive(Debug, thiserror::Error)]
pub enum GraphError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed topology: {0}")]
    Parse(String),
    #[error("layer `{layer}` references unknown input `{input}`")]
    DanglingInput { layer: String, input: String },
    #[error("cycle through layers {0:?}")]
    Cycle(Vec<String>),
    #[error("layer `{layer}` references `{input}`, which is defined later")]
    OutOfOrder { layer: String, input: String },
    #[error("duplicate layer name `{0}`")]
    DuplicateName(String),
    #[error("layer name `{0}` is reserved")]
    ReservedName(String),
    #[error("layer `{layer}`: {reason}")]
    Shape { layer: String, reason: String },
    #[error("layer `{layer}`: {reason}")]
    Hyperparams { layer: String, reason: String },
    #[error("graph must have exactly one output, found {0:?}")]
    OutputCount(Vec<String>),
    #[error("unknown graph output `{0}`")]
    UnknownOutput(String),
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DataType {
    #[serde(rename = "FP32")]
    Fp32,
    #[serde(rename = "INT8")]
    Int8,
}

impl DataType {
    pub fn byte_size(self) -> usize {
        match self {
            DataType::Fp32 => 4,
            DataType::Int8 => 1,
        }
    }

    /// Dtype code shared by the weights container and the wire format.
    pub fn code(self) -> u8 {
        match self {
            DataType::Fp32 => 0,
            DataType::Int8 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DataType::Fp32),
            1 => Some(DataType::Int8),
            _ => None,
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataType::Fp32 => "FP32",
            DataType::Int8 => "INT8",
        })
    }
}

/// Tensor dimensions, N,C,H,W for 4-D activations. Every dim is at least 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct TensorShape(Vec<usize>);

impl TensorShape {
    pub fn new(dims: Vec<usize>) -> Result<Self, String> {
        if dims.is_empty() {
            return Err("shape must have at least one dimension".into());
        }
        if dims.contains(&0) {
            return Err(format!("shape {dims:?} has a zero dimension"));
        }
        Ok(TensorShape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn element_count(&self) -> usize {
        self.0.iter().product()
    }

    /// Channel count: dim 1 for rank ≥ 2 tensors.
    pub fn channels(&self) -> usize {
        self.0.get(1).copied().unwrap_or(1)
    }
}

impl TryFrom<Vec<usize>> for TensorShape {
    type Error = String;
    fn try_from(dims: Vec<usize>) -> Result<Self, String> {
        TensorShape::new(dims)
    }
}

impl From<TensorShape> for Vec<usize> {
    fn from(s: TensorShape) -> Self {
        s.0
    }
}

impl fmt::Display for TensorShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{d}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LayerKind {
    Convolution,
    FullyConnected,
    ReLU,
    MaxPool,
    AvgPool,
    LRN,
    Dropout,
    Concat,
    EltwiseAdd,
    Softmax,
}

impl LayerKind {
    /// Layers that carry learned weights.
    pub fn is_parametric(self) -> bool {
        matches!(self, LayerKind::Convolution | LayerKind::FullyConnected)
    }

    pub fn is_join(self) -> bool {
        matches!(self, LayerKind::Concat | LayerKind::EltwiseAdd)
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Kind-specific hyperparameters. Fields irrelevant to a kind are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub kernel: Option<[usize; 2]>,
    pub stride: [usize; 2],
    pub pad: [usize; 2],
    pub groups: usize,
    pub out_channels: Option<usize>,
    pub ceil_mode: bool,
    pub lrn_size: usize,
    pub alpha: f32,
    pub beta: f32,
    pub k: f32,
    pub dropout_ratio: f32,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            kernel: None,
            stride: [1, 1],
            pad: [0, 0],
            groups: 1,
            out_channels: None,
            ceil_mode: false,
            lrn_size: 5,
            alpha: 1e-4,
            beta: 0.75,
            k: 1.0,
            dropout_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub inputs: Vec<String>,
    pub hyper: Hyperparams,
}

impl LayerSpec {
    pub fn new(name: impl Into<String>, kind: LayerKind, inputs: &[&str]) -> Self {
        LayerSpec {
            name: name.into(),
            kind,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            hyper: Hyperparams::default(),
        }
    }

    pub fn conv(name: &str, input: &str, out_channels: usize, kernel: usize) -> Self {
        let mut l = LayerSpec::new(name, LayerKind::Convolution, &[input]);
        l.hyper.out_channels = Some(out_channels);
        l.hyper.kernel = Some([kernel, kernel]);
        l
    }

    pub fn fc(name: &str, input: &str, out_features: usize) -> Self {
        let mut l = LayerSpec::new(name, LayerKind::FullyConnected, &[input]);
        l.hyper.out_channels = Some(out_features);
        l
    }

    pub fn pool(name: &str, kind: LayerKind, input: &str, kernel: usize, stride: usize) -> Self {
        let mut l = LayerSpec::new(name, kind, &[input]);
        l.hyper.kernel = Some([kernel, kernel]);
        l.hyper.stride = [stride, stride];
        l
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.hyper.stride = [stride, stride];
        self
    }

    pub fn with_pad(mut self, pad: usize) -> Self {
        self.hyper.pad = [pad, pad];
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.hyper.groups = groups;
        self
    }

    pub fn is_parametric(&self) -> bool {
        self.kind.is_parametric()
    }
}

/// A named external input of a graph (the image for a whole network,
/// boundary blobs for a cloud sub-network).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphInput {
    pub name: String,
    pub shape: TensorShape,
}

/// Shapes derived for one layer during validation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerInfo {
    pub output: TensorShape,
    pub weight: Option<TensorShape>,
    pub bias: Option<TensorShape>,
}

impl LayerInfo {
    pub fn param_count(&self) -> usize {
        self.weight.as_ref().map_or(0, |s| s.element_count())
            + self.bias.as_ref().map_or(0, |s| s.element_count())
    }
}

/// Weight and byte totals over a layer prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamStats {
    pub param_count: usize,
    pub int8_bytes: usize,
    pub fp32_bytes: usize,
}

impl ParamStats {
    pub fn from_count(param_count: usize) -> Self {
        ParamStats {
            param_count,
            int8_bytes: param_count,
            fp32_bytes: param_count * 4,
        }
    }

    /// INT8 size in KB of 1024 bytes.
    pub fn int8_kb(&self) -> f64 {
        self.int8_bytes as f64 / 1024.0
    }
}

/// Validated, immutable DAG of layers in topological (file) order.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    name: String,
    inputs: Vec<GraphInput>,
    layers: Vec<LayerSpec>,
    outputs: Vec<String>,
    info: Vec<LayerInfo>,
    index: HashMap<String, usize>,
}

impl NetworkGraph {
    /// Builds a whole network with one input and exactly one output layer.
    pub fn new(
        name: impl Into<String>,
        input: GraphInput,
        layers: Vec<LayerSpec>,
    ) -> Result<Self, GraphError> {
        let mut consumed = vec![false; layers.len()];
        let names: HashMap<&str, usize> = layers
            .iter()
            .enumerate()
            .map(|(i, l)| (l.name.as_str(), i))
            .collect();
        for l in &layers {
            for inp in &l.inputs {
                if let Some(&i) = names.get(inp.as_str()) {
                    consumed[i] = true;
                }
            }
        }
        let outputs: Vec<String> = layers
            .iter()
            .zip(&consumed)
            .filter(|(_, &c)| !c)
            .map(|(l, _)| l.name.clone())
            .collect();
        if layers.is_empty() {
            return Err(GraphError::OutputCount(vec![]));
        }
        // Ordering problems are more useful to report than the output count.
        let graph = Self::with_io(name, vec![input], layers, outputs.clone());
        match graph {
            Ok(g) if g.outputs.len() == 1 => Ok(g),
            Ok(_) => Err(GraphError::OutputCount(outputs)),
            Err(e) => Err(e),
        }
    }

    /// Builds a (sub-)graph with explicit inputs and outputs. Outputs may
    /// name graph inputs, which is how empty sub-networks are represented.
    pub fn with_io(
        name: impl Into<String>,
        inputs: Vec<GraphInput>,
        layers: Vec<LayerSpec>,
        outputs: Vec<String>,
    ) -> Result<Self, GraphError> {
        let mut index = HashMap::new();
        for inp in &inputs {
            if inp.name == CLOUD_ONLY {
                return Err(GraphError::ReservedName(inp.name.clone()));
            }
            if index.insert(inp.name.clone(), usize::MAX).is_some() {
                return Err(GraphError::DuplicateName(inp.name.clone()));
            }
        }
        for (i, l) in layers.iter().enumerate() {
            if l.name == CLOUD_ONLY {
                return Err(GraphError::ReservedName(l.name.clone()));
            }
            if index.insert(l.name.clone(), i).is_some() {
                return Err(GraphError::DuplicateName(l.name.clone()));
            }
        }
        check_references(&layers, &index)?;
        let index: HashMap<String, usize> =
            index.into_iter().filter(|(_, i)| *i != usize::MAX).collect();
        for o in &outputs {
            if !index.contains_key(o) && !inputs.iter().any(|i| &i.name == o) {
                return Err(GraphError::UnknownOutput(o.clone()));
            }
        }
        let info = shape::infer(&inputs, &layers)?;
        Ok(NetworkGraph {
            name: name.into(),
            inputs,
            layers,
            outputs,
            info,
            index,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn inputs(&self) -> &[GraphInput] {
        &self.inputs
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn info(&self) -> &[LayerInfo] {
        &self.info
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn layer(&self, name: &str) -> Option<&LayerSpec> {
        self.layer_index(name).map(|i| &self.layers[i])
    }

    pub fn is_input(&self, name: &str) -> bool {
        self.inputs.iter().any(|i| i.name == name)
    }

    /// The single input shape of a whole network.
    pub fn input_shape(&self) -> &TensorShape {
        &self.inputs[0].shape
    }

    /// Output shape of a layer or graph input.
    pub fn shape_of(&self, name: &str) -> Option<&TensorShape> {
        if let Some(i) = self.layer_index(name) {
            return Some(&self.info[i].output);
        }
        self.inputs.iter().find(|i| i.name == name).map(|i| &i.shape)
    }

    /// Output shape of every layer, keyed by layer name.
    pub fn infer_shapes(&self) -> HashMap<String, TensorShape> {
        self.layers
            .iter()
            .zip(&self.info)
            .map(|(l, i)| (l.name.clone(), i.output.clone()))
            .collect()
    }

    /// Names of the layers consuming `name`, in layer order.
    pub fn consumers(&self, name: &str) -> Vec<&str> {
        self.layers
            .iter()
            .filter(|l| l.inputs.iter().any(|i| i == name))
            .map(|l| l.name.as_str())
            .collect()
    }

    pub fn total_params(&self) -> usize {
        self.info.iter().map(LayerInfo::param_count).sum()
    }

    /// Parameter totals over all layers from the input through `through_layer`.
    pub fn param_stats(&self, through_layer: &str) -> Result<ParamStats, GraphError> {
        if through_layer == CLOUD_ONLY || self.is_input(through_layer) {
            return Ok(ParamStats::from_count(0));
        }
        let last = self
            .layer_index(through_layer)
            .ok_or_else(|| GraphError::UnknownLayer(through_layer.to_string()))?;
        let count = self.info[..=last].iter().map(LayerInfo::param_count).sum();
        Ok(ParamStats::from_count(count))
    }

    /// Parameter totals over an arbitrary layer subset.
    pub fn param_stats_of<'a>(
        &self,
        layers: impl IntoIterator<Item = &'a str>,
    ) -> Result<ParamStats, GraphError> {
        let mut count = 0;
        for name in layers {
            let i = self
                .layer_index(name)
                .ok_or_else(|| GraphError::UnknownLayer(name.to_string()))?;
            count += self.info[i].param_count();
        }
        Ok(ParamStats::from_count(count))
    }

    /// 1 − edge/total parameters; the share of the model that never has to
    /// be stored on the edge device.
    pub fn storage_reduction(&self, edge_params: usize) -> f64 {
        let total = self.total_params();
        if total == 0 {
            return 0.0;
        }
        1.0 - edge_params as f64 / total as f64
    }

    pub fn structure(&self) -> Structure {
        Structure::analyze(self)
    }
}

fn check_references(
    layers: &[LayerSpec],
    index: &HashMap<String, usize>,
) -> Result<(), GraphError> {
    for (i, l) in layers.iter().enumerate() {
        for inp in &l.inputs {
            match index.get(inp) {
                None => {
                    return Err(GraphError::DanglingInput {
                        layer: l.name.clone(),
                        input: inp.clone(),
                    })
                }
                Some(&j) if j != usize::MAX && j >= i => {
                    if let Some(cycle) = find_cycle(layers, index) {
                        return Err(GraphError::Cycle(cycle));
                    }
                    return Err(GraphError::OutOfOrder {
                        layer: l.name.clone(),
                        input: inp.clone(),
                    });
                }
                Some(_) => {}
            }
        }
    }
    Ok(())
}

fn find_cycle(layers: &[LayerSpec], index: &HashMap<String, usize>) -> Option<Vec<String>> {
    // 0 = unvisited, 1 = on stack, 2 = done
    fn visit(
        v: usize,
        layers: &[LayerSpec],
        index: &HashMap<String, usize>,
        state: &mut [u8],
        stack: &mut Vec<usize>,
    ) -> Option<Vec<String>> {
        state[v] = 1;
        stack.push(v);
        for inp in &layers[v].inputs {
            let Some(&u) = index.get(inp) else { continue };
            if u == usize::MAX {
                continue;
            }
            if state[u] == 1 {
                let start = stack.iter().position(|&x| x == u).unwrap();
                return Some(stack[start..].iter().map(|&x| layers[x].name.clone()).collect());
            }
            if state[u] == 0 {
                if let Some(c) = visit(u, layers, index, state, stack) {
                    return Some(c);
                }
            }
        }
        stack.pop();
        state[v] = 2;
        None
    }
    let mut state = vec![0u8; layers.len()];
    for v in 0..layers.len() {
        if state[v] == 0 {
            if let Some(c) = visit(v, layers, index, &mut state, &mut Vec::new()) {
                return Some(c);
            }
        }
    }
    None
}

/// Reads and validates a topology JSON file.
pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkGraph, GraphError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_json_str(&text)
}

pub fn save_network(net: &NetworkGraph, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let path = path.as_ref();
    std::fs::write(path, to_json_string(net)).map_err(|source| GraphError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Topologies shipped with the crate.
pub mod bundled {
    use super::{from_json_str, NetworkGraph};

    pub const ALEXNET: &str = include_str!("../../assets/alexnet.json");
    pub const VGG16: &str = include_str!("../../assets/vgg16.json");
    pub const GOOGLENET: &str = include_str!("../../assets/googlenet.json");
    pub const RESNET18: &str = include_str!("../../assets/resnet18.json");

    pub const NAMES: [&str; 4] = ["alexnet", "vgg16", "googlenet", "resnet18"];

    /// Looks up a bundled topology by name, with or without `.json`.
    pub fn source(name: &str) -> Option<&'static str> {
        let stem = name.strip_suffix(".json").unwrap_or(name);
        match stem.to_ascii_lowercase().as_str() {
            "alexnet" => Some(ALEXNET),
            "vgg16" => Some(VGG16),
            "googlenet" => Some(GOOGLENET),
            "resnet18" | "resnet-18" => Some(RESNET18),
            _ => None,
        }
    }

    pub fn load(name: &str) -> Option<NetworkGraph> {
        source(name).map(|s| from_json_str(s).expect("bundled topology is valid"))
    }

    pub fn all() -> Vec<NetworkGraph> {
        NAMES.iter().map(|n| load(n).unwrap()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input(shape: &[usize]) -> GraphInput {
        GraphInput {
            name: "data".into(),
            shape: TensorShape::new(shape.to_vec()).unwrap(),
        }
    }

    #[test]
    fn datatype_sizes() {
        assert_eq!(DataType::Fp32.byte_size(), 4);
        assert_eq!(DataType::Int8.byte_size(), 1);
        assert_eq!(DataType::from_code(DataType::Int8.code()), Some(DataType::Int8));
        assert_eq!(DataType::from_code(7), None);
    }

    #[test]
    fn shape_rejects_zero_dims() {
        assert!(TensorShape::new(vec![1, 0, 3]).is_err());
        assert!(TensorShape::new(vec![]).is_err());
        assert_eq!(TensorShape::new(vec![1, 3, 4]).unwrap().element_count(), 12);
    }

    #[test]
    fn single_softmax_net_is_valid() {
        let net = NetworkGraph::new(
            "tiny",
            input(&[1, 10]),
            vec![LayerSpec::new("prob", LayerKind::Softmax, &["data"])],
        )
        .unwrap();
        assert_eq!(net.layers().len(), 1);
        assert_eq!(net.outputs(), ["prob"]);
        assert_eq!(net.param_stats("prob").unwrap(), ParamStats::from_count(0));
    }

    #[test]
    fn dangling_reference_names_the_input() {
        let err = NetworkGraph::new(
            "bad",
            input(&[1, 3, 8, 8]),
            vec![LayerSpec::new("r", LayerKind::ReLU, &["convX"])],
        )
        .unwrap_err();
        assert!(matches!(&err, GraphError::DanglingInput { input, .. } if input == "convX"));
        assert!(err.to_string().contains("convX"));
    }

    #[test]
    fn cycle_is_reported() {
        let err = NetworkGraph::new(
            "cyc",
            input(&[1, 3, 8, 8]),
            vec![
                LayerSpec::new("a", LayerKind::ReLU, &["b"]),
                LayerSpec::new("b", LayerKind::ReLU, &["a"]),
                LayerSpec::new("c", LayerKind::ReLU, &["b"]),
            ],
        )
        .unwrap_err();
        match err {
            GraphError::Cycle(names) => {
                assert!(names.contains(&"a".to_string()) && names.contains(&"b".to_string()))
            }
            other => panic!("expected cycle, got {other}"),
        }
    }

    #[test]
    fn forward_reference_without_cycle_is_out_of_order() {
        let err = NetworkGraph::new(
            "fwd",
            input(&[1, 3, 8, 8]),
            vec![
                LayerSpec::new("b", LayerKind::ReLU, &["a"]),
                LayerSpec::new("a", LayerKind::ReLU, &["data"]),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::OutOfOrder { .. }));
    }

    #[test]
    fn two_outputs_rejected() {
        let err = NetworkGraph::new(
            "two",
            input(&[1, 3, 8, 8]),
            vec![
                LayerSpec::new("a", LayerKind::ReLU, &["data"]),
                LayerSpec::new("b", LayerKind::ReLU, &["data"]),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::OutputCount(v) if v.len() == 2));
    }

    #[test]
    fn reserved_and_duplicate_names() {
        let err = NetworkGraph::new(
            "r",
            input(&[1, 4]),
            vec![LayerSpec::new(CLOUD_ONLY, LayerKind::ReLU, &["data"])],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::ReservedName(_)));
        let err = NetworkGraph::new(
            "d",
            input(&[1, 4]),
            vec![
                LayerSpec::new("a", LayerKind::ReLU, &["data"]),
                LayerSpec::new("a", LayerKind::ReLU, &["a"]),
            ],
        )
        .unwrap_err();
        assert!(matches!(err, GraphError::DuplicateName(_)));
    }

    #[test]
    fn param_stats_unknown_layer() {
        let net = bundled::load("alexnet").unwrap();
        assert!(matches!(
            net.param_stats("conv9"),
            Err(GraphError::UnknownLayer(_))
        ));
        assert_eq!(net.param_stats(CLOUD_ONLY).unwrap().param_count, 0);
    }

    #[test]
    fn alexnet_parametric_layers() {
        let net = bundled::load("alexnet").unwrap();
        let convs = net.layers().iter().filter(|l| l.kind == LayerKind::Convolution).count();
        let fcs = net.layers().iter().filter(|l| l.kind == LayerKind::FullyConnected).count();
        assert_eq!((convs, fcs), (5, 3));
    }

    #[test]
    fn alexnet_prefix_params() {
        let net = bundled::load("alexnet").unwrap();
        // per-layer k_h*k_w*(C_in/groups)*C_out + C_out, conv1..conv5
        let expected = (11 * 11 * 3 * 96 + 96)
            + (5 * 5 * 48 * 256 + 256)
            + (3 * 3 * 256 * 384 + 384)
            + (3 * 3 * 192 * 384 + 384)
            + (3 * 3 * 192 * 256 + 256);
        assert_eq!(expected, 2_334_080);
        let stats = net.param_stats("conv5").unwrap();
        assert_eq!(stats.param_count, 2_334_080);
        assert_eq!(stats.int8_bytes, 2_334_080);
        assert_eq!(stats.fp32_bytes, 4 * 2_334_080);
        assert_eq!(stats.int8_kb().round() as i64, 2279);
    }

    #[test]
    fn vgg16_prefix_params() {
        let net = bundled::load("vgg16").unwrap();
        let stats = net.param_stats("conv1_2").unwrap();
        assert_eq!(stats.param_count, 38_720);
        assert_eq!(stats.int8_kb().round() as i64, 38);
        assert_eq!(net.total_params(), 138_357_544);
    }

    #[test]
    fn param_stats_monotone_in_prefix_order() {
        for net in bundled::all() {
            let mut prev = 0;
            for l in net.layers() {
                let c = net.param_stats(&l.name).unwrap().param_count;
                assert!(c >= prev, "{} not monotone at {}", net.name(), l.name);
                prev = c;
            }
            assert_eq!(prev, net.total_params());
        }
    }
}
