//! Candidate partition points, network splitting and boundary payloads.
//!
//! A partition point names the last layer run on the edge. The edge side is
//! the point's layer (plus any merged non-parametric tail) and everything it
//! depends on; the cloud side is the rest.
//!
//! Boundary blob precision follows from where the producer's consumers run:
//!
//! | producer                                   | blob  |
//! |--------------------------------------------|-------|
//! | graph input                                | FP32  |
//! | edge layer consumed only in the cloud      | INT8  |
//! | edge layer also consumed on the edge       | FP32  |
//! | network output computed on the edge        | INT8  |
//!
//! An edge layer that feeds another edge layer is consumed in dequantized
//! FP32 form, so that is the copy available to send.

use serde::{Deserialize, Serialize};

use crate::graph::{DataType, GraphError, GraphInput, NetworkGraph, TensorShape, CLOUD_ONLY};

/// Quantization metadata carried by every INT8 blob: t_min, t_max, range_lp.
pub const INT8_METADATA_BYTES: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum PartitionError {
    #[error("`{0}` is not a candidate partition point")]
    InvalidPoint(String),
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateRuleSet {
    pub exclude_brother_branch: bool,
    pub exclude_shortcut_span: bool,
    pub merge_nonparametric: bool,
}

impl Default for CandidateRuleSet {
    fn default() -> Self {
        CandidateRuleSet {
            exclude_brother_branch: true,
            exclude_shortcut_span: true,
            merge_nonparametric: true,
        }
    }
}

impl CandidateRuleSet {
    /// Every layer is its own point and nothing is excluded.
    pub fn none() -> Self {
        CandidateRuleSet {
            exclude_brother_branch: false,
            exclude_shortcut_span: false,
            merge_nonparametric: false,
        }
    }
}

/// One tensor crossing the edge/cloud boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobDescriptor {
    pub producer: String,
    pub shape: TensorShape,
    pub dtype: DataType,
    /// Payload bytes plus INT8 metadata; excludes per-blob wire headers.
    pub byte_size: usize,
}

impl BlobDescriptor {
    pub fn new(producer: impl Into<String>, shape: TensorShape, dtype: DataType) -> Self {
        let meta = if dtype == DataType::Int8 { INT8_METADATA_BYTES } else { 0 };
        BlobDescriptor {
            producer: producer.into(),
            byte_size: shape.element_count() * dtype.byte_size() + meta,
            shape,
            dtype,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPoint {
    /// Head layer of the point, or `cloud-only`.
    pub layer: String,
    /// Non-parametric layers folded into this point, in layer order.
    pub merged_tail: Vec<String>,
    pub transmit: Vec<BlobDescriptor>,
}

impl PartitionPoint {
    pub fn is_cloud_only(&self) -> bool {
        self.layer == CLOUD_ONLY
    }

    /// Last layer executed on the edge, `None` for the cloud-only point.
    pub fn last_layer(&self) -> Option<&str> {
        if self.is_cloud_only() {
            return None;
        }
        Some(self.merged_tail.last().unwrap_or(&self.layer))
    }

    /// Summary such as `INT8 x 1 + FP32 x 1`.
    pub fn transmit_summary(&self) -> String {
        summarize(&self.transmit)
    }
}

pub fn summarize(blobs: &[BlobDescriptor]) -> String {
    let count = |d| blobs.iter().filter(|b| b.dtype == d).count();
    [DataType::Int8, DataType::Fp32]
        .into_iter()
        .filter(|&d| count(d) > 0)
        .map(|d| format!("{d} x {}", count(d)))
        .collect::<Vec<_>>()
        .join(" + ")
}

/// Merge groups: `head_of[i]` is the layer whose point layer `i` belongs to.
fn merge_heads(net: &NetworkGraph, merge: bool) -> Vec<usize> {
    let s = net.structure();
    let output = net.layer_index(&net.outputs()[0]);
    let mut head_of: Vec<usize> = Vec::with_capacity(net.layers().len());
    for (i, l) in net.layers().iter().enumerate() {
        let producer = (l.inputs.len() == 1)
            .then(|| net.layer_index(&l.inputs[0]))
            .flatten();
        let head = match producer {
            Some(p)
                if merge
                    && !l.is_parametric()
                    && s.fan_out(p) == 1
                    && s.fan_out(i) <= 1
                    && Some(i) != output =>
            {
                head_of[p]
            }
            _ => i,
        };
        head_of.push(head);
    }
    head_of
}

/// Layers the given layer depends on, itself included.
fn ancestor_closure(net: &NetworkGraph, last: usize) -> Vec<bool> {
    let mut edge = vec![false; net.layers().len()];
    edge[last] = true;
    for i in (0..=last).rev() {
        if edge[i] {
            for inp in &net.layers()[i].inputs {
                if let Some(j) = net.layer_index(inp) {
                    edge[j] = true;
                }
            }
        }
    }
    edge
}

/// Blobs crossing from an arbitrary edge layer set to its complement, in
/// producer order (graph input first).
pub fn boundary_payload(net: &NetworkGraph, edge: &[bool]) -> Vec<BlobDescriptor> {
    let layers = net.layers();
    let on_edge = |name: &str| net.layer_index(name).is_some_and(|i| edge[i]);
    let mut out = Vec::new();
    for gi in net.inputs() {
        let cloud_uses = layers
            .iter()
            .enumerate()
            .any(|(i, l)| !edge[i] && l.inputs.contains(&gi.name));
        let no_layers = !edge.contains(&true);
        if cloud_uses || (no_layers && layers.is_empty()) {
            out.push(BlobDescriptor::new(&gi.name, gi.shape.clone(), DataType::Fp32));
        }
    }
    for (i, l) in layers.iter().enumerate() {
        if !edge[i] {
            continue;
        }
        let consumers = net.consumers(&l.name);
        let to_cloud = consumers.iter().any(|c| !on_edge(c));
        let is_output = net.outputs().contains(&l.name);
        if !(to_cloud || is_output) {
            continue;
        }
        let dtype = if consumers.iter().any(|c| on_edge(c)) {
            DataType::Fp32
        } else {
            DataType::Int8
        };
        out.push(BlobDescriptor::new(&l.name, net.info()[i].output.clone(), dtype));
    }
    out
}

fn cloud_only_point(net: &NetworkGraph) -> PartitionPoint {
    let gi = &net.inputs()[0];
    PartitionPoint {
        layer: CLOUD_ONLY.to_string(),
        merged_tail: Vec::new(),
        transmit: vec![BlobDescriptor::new(&gi.name, gi.shape.clone(), DataType::Fp32)],
    }
}

/// Candidate points in topological order, the cloud-only point first.
pub fn candidates(net: &NetworkGraph, rules: &CandidateRuleSet) -> Vec<PartitionPoint> {
    let s = net.structure();
    let head_of = merge_heads(net, rules.merge_nonparametric);
    let mut out = vec![cloud_only_point(net)];
    for (h, &head) in head_of.iter().enumerate() {
        if head != h
            || (rules.exclude_brother_branch && s.has_brother_branch(h))
            || (rules.exclude_shortcut_span && s.in_shortcut_span(h))
        {
            continue;
        }
        let tail: Vec<usize> = (h + 1..head_of.len()).filter(|&i| head_of[i] == h).collect();
        let last = tail.last().copied().unwrap_or(h);
        out.push(PartitionPoint {
            layer: net.layers()[h].name.clone(),
            merged_tail: tail.iter().map(|&i| net.layers()[i].name.clone()).collect(),
            transmit: boundary_payload(net, &ancestor_closure(net, last)),
        });
    }
    out
}

pub fn find_candidate(
    net: &NetworkGraph,
    rules: &CandidateRuleSet,
    name: &str,
) -> Result<PartitionPoint, PartitionError> {
    candidates(net, rules)
        .into_iter()
        .find(|p| p.layer == name)
        .ok_or_else(|| PartitionError::InvalidPoint(name.to_string()))
}

/// Point at any layer, candidate or not: that layer and its ancestors on
/// the edge, no merging.
pub fn analysis_point(net: &NetworkGraph, layer: &str) -> Result<PartitionPoint, PartitionError> {
    if layer == CLOUD_ONLY {
        return Ok(cloud_only_point(net));
    }
    let i = net
        .layer_index(layer)
        .ok_or_else(|| PartitionError::UnknownLayer(layer.to_string()))?;
    Ok(PartitionPoint {
        layer: layer.to_string(),
        merged_tail: Vec::new(),
        transmit: boundary_payload(net, &ancestor_closure(net, i)),
    })
}

/// Edge-side layer mask of a point.
pub fn edge_set(net: &NetworkGraph, point: &PartitionPoint) -> Result<Vec<bool>, PartitionError> {
    match point.last_layer() {
        None => Ok(vec![false; net.layers().len()]),
        Some(last) => {
            let i = net
                .layer_index(last)
                .ok_or_else(|| PartitionError::UnknownLayer(last.to_string()))?;
            Ok(ancestor_closure(net, i))
        }
    }
}

pub fn transmission_payload(
    net: &NetworkGraph,
    point: &PartitionPoint,
) -> Result<Vec<BlobDescriptor>, PartitionError> {
    Ok(boundary_payload(net, &edge_set(net, point)?))
}

/// Edge and cloud halves of a network.
#[derive(Debug, Clone)]
pub struct Split {
    pub edge: NetworkGraph,
    pub cloud: NetworkGraph,
    pub boundary: Vec<BlobDescriptor>,
}

/// Splits at a candidate of the default rule set.
pub fn split(net: &NetworkGraph, point: &PartitionPoint) -> Result<Split, PartitionError> {
    split_with(net, &CandidateRuleSet::default(), point)
}

pub fn split_with(
    net: &NetworkGraph,
    rules: &CandidateRuleSet,
    point: &PartitionPoint,
) -> Result<Split, PartitionError> {
    if find_candidate(net, rules, &point.layer)? != *point {
        return Err(PartitionError::InvalidPoint(point.layer.clone()));
    }
    Split::from_edge_set(net, &edge_set(net, point)?)
}

impl Split {
    /// Splits along an arbitrary dependency-closed edge mask.
    pub fn from_edge_set(net: &NetworkGraph, edge: &[bool]) -> Result<Split, PartitionError> {
        let boundary = boundary_payload(net, edge);
        let pick = |side: bool| {
            net.layers()
                .iter()
                .zip(edge)
                .filter(|(_, &e)| e == side)
                .map(|(l, _)| l.clone())
                .collect::<Vec<_>>()
        };
        let cut: Vec<String> = boundary.iter().map(|b| b.producer.clone()).collect();
        let edge_net = NetworkGraph::with_io(
            format!("{}.edge", net.name()),
            net.inputs().to_vec(),
            pick(true),
            cut.clone(),
        )?;
        let cloud_inputs = boundary
            .iter()
            .map(|b| GraphInput { name: b.producer.clone(), shape: b.shape.clone() })
            .collect();
        let cloud_layers = pick(false);
        let cloud_outputs = if cloud_layers.is_empty() { cut } else { net.outputs().to_vec() };
        let cloud_net = NetworkGraph::with_io(
            format!("{}.cloud", net.name()),
            cloud_inputs,
            cloud_layers,
            cloud_outputs,
        )?;
        Ok(Split { edge: edge_net, cloud: cloud_net, boundary })
    }

    /// Reassembles the original network from both halves.
    pub fn stitch(&self, name: &str) -> Result<NetworkGraph, GraphError> {
        let layers = self.edge.layers().iter().chain(self.cloud.layers()).cloned().collect();
        NetworkGraph::new(name, self.edge.inputs()[0].clone(), layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::bundled;
    use crate::testnets;

    fn names(points: &[PartitionPoint]) -> Vec<&str> {
        points.iter().map(|p| p.layer.as_str()).collect()
    }

    #[test]
    fn chain_merges_relus() {
        let c = candidates(&testnets::chain(), &CandidateRuleSet::default());
        // the output layer stays its own (pure-edge) point
        assert_eq!(names(&c), ["cloud-only", "conv1", "conv2", "relu2"]);
        assert_eq!(c[1].merged_tail, ["relu1"]);
        assert!(c[2].merged_tail.is_empty());
    }

    #[test]
    fn output_layer_never_merged() {
        let c = candidates(&testnets::alexnet_mini(), &CandidateRuleSet::default());
        assert_eq!(
            names(&c),
            ["cloud-only", "conv1", "conv2", "conv3", "conv4", "conv5", "fc6", "fc7", "fc8", "prob"]
        );
        assert_eq!(c[5].merged_tail, ["conv5_relu", "pool5"]);
        assert!(c[9].merged_tail.is_empty());
    }

    #[test]
    fn block_structures() {
        let rules = CandidateRuleSet::default();
        assert_eq!(names(&candidates(&testnets::inception_block(), &rules)), ["cloud-only", "p1", "p13"]);
        assert_eq!(names(&candidates(&testnets::residual_block(), &rules)), ["cloud-only", "p1", "p5"]);
    }

    #[test]
    fn candidates_send_only_int8() {
        for net in bundled::all() {
            for p in candidates(&net, &CandidateRuleSet::default()).iter().skip(1) {
                assert!(p.transmit.iter().all(|b| b.dtype == DataType::Int8), "{} {}", net.name(), p.layer);
                assert_eq!(p.transmit.len(), 1);
            }
        }
    }

    #[test]
    fn inception_payloads() {
        let net = testnets::inception_block();
        let s = |l| analysis_point(&net, l).unwrap().transmit_summary();
        assert_eq!(s("p1"), "INT8 x 1");
        assert_eq!(s("p13"), "INT8 x 1");
        for p in ["p2", "p3", "p4", "p5", "p6", "p7", "p8", "p9", "p10", "p11", "p12"] {
            assert_eq!(s(p), "INT8 x 1 + FP32 x 1", "{p}");
        }
        // every branch on the edge, concat in the cloud
        let mut edge = vec![true; net.layers().len()];
        edge[net.layer_index("p13").unwrap()] = false;
        assert_eq!(summarize(&boundary_payload(&net, &edge)), "INT8 x 4");
    }

    #[test]
    fn residual_payloads() {
        let net = testnets::residual_block();
        let s = |l| analysis_point(&net, l).unwrap().transmit_summary();
        for p in ["p1", "p5"] {
            assert_eq!(s(p), "INT8 x 1");
        }
        for p in ["p2", "p3", "p4", "p6"] {
            assert_eq!(s(p), "INT8 x 1 + FP32 x 1", "{p}");
        }
    }

    #[test]
    fn alexnet_split_at_conv5() {
        let net = bundled::load("alexnet").unwrap();
        let p = find_candidate(&net, &CandidateRuleSet::default(), "conv5").unwrap();
        let sp = split(&net, &p).unwrap();
        assert_eq!(sp.edge.layers().last().unwrap().name, "pool5");
        assert_eq!(sp.cloud.layers()[0].name, "fc6");
        assert_eq!(sp.boundary.len(), 1);
        assert_eq!(sp.boundary[0].shape.dims(), [1, 256, 6, 6]);
        assert_eq!(sp.boundary[0].byte_size, 256 * 36 + 12);
        assert_eq!(sp.stitch("alexnet").unwrap(), net);
    }

    #[test]
    fn boundary_splits() {
        let net = testnets::toy_classifier();
        let c = candidates(&net, &CandidateRuleSet::default());
        let cloud = split(&net, &c[0]).unwrap();
        assert!(cloud.edge.layers().is_empty());
        assert_eq!(cloud.cloud.layers().len(), net.layers().len());
        assert_eq!(cloud.boundary[0].dtype, DataType::Fp32);
        let edge = split(&net, c.last().unwrap()).unwrap();
        assert!(edge.cloud.layers().is_empty());
        assert_eq!(edge.cloud.outputs(), ["fc"]);
        for p in &c {
            assert_eq!(split(&net, p).unwrap().stitch(net.name()).unwrap(), net);
        }
    }

    #[test]
    fn non_candidate_rejected() {
        let net = testnets::inception_block();
        let p = analysis_point(&net, "p3").unwrap();
        assert!(matches!(split(&net, &p), Err(PartitionError::InvalidPoint(_))));
        assert!(matches!(
            find_candidate(&net, &CandidateRuleSet::default(), "nope"),
            Err(PartitionError::InvalidPoint(_))
        ));
    }

    #[test]
    fn googlenet_trunk_only() {
        let net = bundled::load("googlenet").unwrap();
        let c = candidates(&net, &CandidateRuleSet::default());
        assert!(c.iter().all(|p| !p.layer.contains("_1x1") && !p.layer.contains("_3x3")));
        assert!(names(&c).contains(&"conv2"));
        assert!(names(&c).contains(&"inception_3a_output"));
    }

    #[test]
    fn rules_off_gives_every_layer() {
        let net = testnets::inception_block();
        assert_eq!(candidates(&net, &CandidateRuleSet::none()).len(), net.layers().len() + 1);
    }
}
