//! Small networks used by tests, benches and the CLI demos.
//!
//! `inception_block` and `residual_block` label their partition points `p1..p13`
//! and `p1..p6`: `p1` feeds the fork, the last point is the join.

use crate::graph::{GraphInput, LayerKind, LayerSpec, NetworkGraph, TensorShape};

fn input(dims: &[usize]) -> GraphInput {
    GraphInput {
        name: "data".into(),
        shape: TensorShape::new(dims.to_vec()).unwrap(),
    }
}

fn relu(name: &str, src: &str) -> LayerSpec {
    LayerSpec::new(name, LayerKind::ReLU, &[src])
}

/// conv→relu→conv→relu.
pub fn chain() -> NetworkGraph {
    NetworkGraph::new(
        "chain",
        input(&[1, 3, 8, 8]),
        vec![
            LayerSpec::conv("conv1", "data", 4, 3).with_pad(1),
            relu("relu1", "conv1"),
            LayerSpec::conv("conv2", "relu1", 4, 3).with_pad(1),
            relu("relu2", "conv2"),
        ],
    )
    .unwrap()
}

/// Two convolutions and one fully-connected layer producing 10 logits.
pub fn toy_classifier() -> NetworkGraph {
    NetworkGraph::new(
        "toy_classifier",
        input(&[1, 3, 16, 16]),
        vec![
            LayerSpec::conv("conv1", "data", 8, 3).with_pad(1),
            relu("relu1", "conv1"),
            LayerSpec::pool("pool1", LayerKind::MaxPool, "relu1", 2, 2),
            LayerSpec::conv("conv2", "pool1", 16, 3).with_pad(1),
            relu("relu2", "conv2"),
            LayerSpec::pool("pool2", LayerKind::MaxPool, "relu2", 2, 2),
            LayerSpec::fc("fc", "pool2", 10),
        ],
    )
    .unwrap()
}

/// One inception module: a fork layer, four parallel branches, a concat.
pub fn inception_block() -> NetworkGraph {
    let mut pool = LayerSpec::pool("p5", LayerKind::MaxPool, "p1", 3, 1);
    pool.hyper.pad = [1, 1];
    NetworkGraph::new(
        "inception_block",
        input(&[1, 8, 8, 8]),
        vec![
            LayerSpec::conv("p1", "data", 8, 1),
            LayerSpec::conv("p2", "p1", 4, 1),
            LayerSpec::conv("p3", "p1", 4, 1),
            LayerSpec::conv("p4", "p1", 2, 1),
            pool,
            relu("p6", "p2"),
            LayerSpec::conv("p7", "p3", 6, 3).with_pad(1),
            LayerSpec::conv("p8", "p4", 4, 5).with_pad(2),
            LayerSpec::conv("p9", "p5", 2, 1),
            relu("p10", "p7"),
            relu("p11", "p8"),
            relu("p12", "p9"),
            LayerSpec::new("p13", LayerKind::Concat, &["p6", "p10", "p11", "p12"]),
        ],
    )
    .unwrap()
}

/// One residual block with a projection shortcut.
pub fn residual_block() -> NetworkGraph {
    NetworkGraph::new(
        "residual_block",
        input(&[1, 4, 8, 8]),
        vec![
            LayerSpec::conv("p1", "data", 8, 3).with_pad(1),
            LayerSpec::conv("p2", "p1", 8, 3).with_pad(1),
            relu("p3", "p2"),
            LayerSpec::conv("p4", "p3", 8, 3).with_pad(1),
            LayerSpec::conv("p6", "p1", 8, 1),
            LayerSpec::new("p5", LayerKind::EltwiseAdd, &["p6", "p4"]),
        ],
    )
    .unwrap()
}

/// AlexNet's layer sequence and names at a fraction of the width and
/// resolution.
pub fn alexnet_mini() -> NetworkGraph {
    let lrn = |name: &str, src: &str| LayerSpec::new(name, LayerKind::LRN, &[src]);
    let drop = |name: &str, src: &str| LayerSpec::new(name, LayerKind::Dropout, &[src]);
    NetworkGraph::new(
        "alexnet_mini",
        input(&[1, 3, 67, 67]),
        vec![
            LayerSpec::conv("conv1", "data", 12, 11).with_stride(4),
            relu("conv1_relu", "conv1"),
            lrn("norm1", "conv1_relu"),
            LayerSpec::pool("pool1", LayerKind::MaxPool, "norm1", 3, 2),
            LayerSpec::conv("conv2", "pool1", 32, 5).with_pad(2).with_groups(2),
            relu("conv2_relu", "conv2"),
            lrn("norm2", "conv2_relu"),
            LayerSpec::pool("pool2", LayerKind::MaxPool, "norm2", 3, 2),
            LayerSpec::conv("conv3", "pool2", 48, 3).with_pad(1),
            relu("conv3_relu", "conv3"),
            LayerSpec::conv("conv4", "conv3_relu", 48, 3).with_pad(1).with_groups(2),
            relu("conv4_relu", "conv4"),
            LayerSpec::conv("conv5", "conv4_relu", 32, 3).with_pad(1).with_groups(2),
            relu("conv5_relu", "conv5"),
            LayerSpec::pool("pool5", LayerKind::MaxPool, "conv5_relu", 3, 2),
            LayerSpec::fc("fc6", "pool5", 64),
            relu("relu6", "fc6"),
            drop("drop6", "relu6"),
            LayerSpec::fc("fc7", "drop6", 64),
            relu("relu7", "fc7"),
            drop("drop7", "relu7"),
            LayerSpec::fc("fc8", "drop7", 10),
            LayerSpec::new("prob", LayerKind::Softmax, &["fc8"]),
        ],
    )
    .unwrap()
}
