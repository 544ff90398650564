use std::collections::HashMap;

use super::{GraphError, GraphInput, LayerInfo, LayerKind, LayerSpec, TensorShape};

/// Output extent of a convolution along one axis, or `None` if the kernel
/// does not fit the padded input.
pub fn conv_output_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if kernel == 0 || stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Pooling extent. Floor by default; ceil mode also drops a trailing window
/// that would start entirely in the padding.
pub fn pool_output_dim(
    input: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
    ceil_mode: bool,
) -> Option<usize> {
    let padded = input + 2 * pad;
    if kernel == 0 || stride == 0 || padded < kernel {
        return None;
    }
    if !ceil_mode {
        return Some((padded - kernel) / stride + 1);
    }
    let mut out = (padded - kernel).div_ceil(stride) + 1;
    if pad > 0 && (out - 1) * stride >= input + pad {
        out -= 1;
    }
    Some(out)
}

fn err(layer: &LayerSpec, reason: impl Into<String>) -> GraphError {
    GraphError::Shape {
        layer: layer.name.clone(),
        reason: reason.into(),
    }
}

fn hyper_err(layer: &LayerSpec, reason: impl Into<String>) -> GraphError {
    GraphError::Hyperparams {
        layer: layer.name.clone(),
        reason: reason.into(),
    }
}

fn shape(dims: Vec<usize>) -> TensorShape {
    TensorShape::new(dims).expect("inferred dims are positive")
}

pub(super) fn infer(inputs: &[GraphInput], layers: &[LayerSpec]) -> Result<Vec<LayerInfo>, GraphError> {
    let mut known: HashMap<&str, TensorShape> =
        inputs.iter().map(|i| (i.name.as_str(), i.shape.clone())).collect();
    let mut out = Vec::with_capacity(layers.len());
    for l in layers {
        let ins: Vec<&TensorShape> = l
            .inputs
            .iter()
            .map(|n| known.get(n.as_str()).expect("references checked before shape inference"))
            .collect();
        let info = infer_layer(l, &ins)?;
        known.insert(&l.name, info.output.clone());
        out.push(info);
    }
    Ok(out)
}

fn infer_layer(l: &LayerSpec, ins: &[&TensorShape]) -> Result<LayerInfo, GraphError> {
    let h = &l.hyper;
    if l.kind.is_join() {
        if ins.len() < 2 {
            return Err(err(l, format!("{} needs at least two inputs", l.kind)));
        }
    } else if ins.len() != 1 {
        return Err(err(l, format!("{} takes exactly one input, got {}", l.kind, ins.len())));
    }
    let plain = |output: TensorShape| LayerInfo {
        output,
        weight: None,
        bias: None,
    };
    match l.kind {
        LayerKind::Convolution => {
            let x = ins[0].dims();
            if x.len() != 4 {
                return Err(err(l, format!("convolution expects a 4-D input, got {}", ins[0])));
            }
            let out_c = h.out_channels.ok_or_else(|| hyper_err(l, "missing out_channels"))?;
            let [kh, kw] = h.kernel.ok_or_else(|| hyper_err(l, "missing kernel"))?;
            let g = h.groups;
            if g == 0 || !x[1].is_multiple_of(g) || out_c % g != 0 {
                return Err(hyper_err(
                    l,
                    format!("groups={g} must divide input channels {} and output channels {out_c}", x[1]),
                ));
            }
            let oh = conv_output_dim(x[2], kh, h.stride[0], h.pad[0]);
            let ow = conv_output_dim(x[3], kw, h.stride[1], h.pad[1]);
            let (Some(oh), Some(ow)) = (oh, ow) else {
                return Err(err(l, format!("kernel {kh}x{kw} does not fit input {}", ins[0])));
            };
            Ok(LayerInfo {
                output: shape(vec![x[0], out_c, oh, ow]),
                weight: Some(shape(vec![out_c, x[1] / g, kh, kw])),
                bias: Some(shape(vec![out_c])),
            })
        }
        LayerKind::FullyConnected => {
            let x = ins[0].dims();
            let out_f = h.out_channels.ok_or_else(|| hyper_err(l, "missing out_channels"))?;
            let features = ins[0].element_count() / x[0];
            Ok(LayerInfo {
                output: shape(vec![x[0], out_f]),
                weight: Some(shape(vec![out_f, features])),
                bias: Some(shape(vec![out_f])),
            })
        }
        LayerKind::MaxPool | LayerKind::AvgPool => {
            let x = ins[0].dims();
            if x.len() != 4 {
                return Err(err(l, format!("pooling expects a 4-D input, got {}", ins[0])));
            }
            let [kh, kw] = h.kernel.ok_or_else(|| hyper_err(l, "missing kernel"))?;
            if h.pad[0] >= kh || h.pad[1] >= kw {
                return Err(hyper_err(l, "pooling pad must be smaller than the kernel"));
            }
            let oh = pool_output_dim(x[2], kh, h.stride[0], h.pad[0], h.ceil_mode);
            let ow = pool_output_dim(x[3], kw, h.stride[1], h.pad[1], h.ceil_mode);
            let (Some(oh), Some(ow)) = (oh, ow) else {
                return Err(err(l, format!("window {kh}x{kw} does not fit input {}", ins[0])));
            };
            Ok(plain(shape(vec![x[0], x[1], oh, ow])))
        }
        LayerKind::LRN => {
            if ins[0].rank() < 2 {
                return Err(err(l, "LRN needs a channel axis"));
            }
            if h.lrn_size == 0 || h.lrn_size.is_multiple_of(2) {
                return Err(hyper_err(l, "lrn_size must be odd"));
            }
            Ok(plain(ins[0].clone()))
        }
        LayerKind::ReLU | LayerKind::Dropout | LayerKind::Softmax => Ok(plain(ins[0].clone())),
        LayerKind::Concat => {
            let first = ins[0].dims();
            if first.len() < 2 {
                return Err(err(l, "concat needs a channel axis"));
            }
            let mut channels = 0;
            for s in ins {
                let d = s.dims();
                let same_rest = d.len() == first.len()
                    && d[0] == first[0]
                    && d[2..] == first[2..];
                if !same_rest {
                    return Err(err(
                        l,
                        format!("concat inputs disagree outside the channel axis: {} vs {}", ins[0], s),
                    ));
                }
                channels += d[1];
            }
            let mut dims = first.to_vec();
            dims[1] = channels;
            Ok(plain(shape(dims)))
        }
        LayerKind::EltwiseAdd => {
            if let Some(s) = ins.iter().find(|s| **s != ins[0]) {
                return Err(err(l, format!("eltwise inputs differ: {} vs {}", ins[0], s)));
            }
            Ok(plain(ins[0].clone()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{bundled, NetworkGraph};

    /// Counts window start positions whose window lies inside the padded
    /// input, by walking every candidate start.
    fn brute_force_positions(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
        let lo = -(pad as i64);
        let hi = (input + pad) as i64;
        let mut count = 0;
        let mut start = lo;
        while start + kernel as i64 <= hi {
            count += 1;
            start += stride as i64;
        }
        count
    }

    #[test]
    fn conv_dim_matches_enumeration() {
        for input in 1..40 {
            for kernel in 1..8 {
                for stride in 1..5 {
                    for pad in 0..4 {
                        let expected = brute_force_positions(input, kernel, stride, pad);
                        let got = conv_output_dim(input, kernel, stride, pad).unwrap_or(0);
                        assert_eq!(got, expected, "in={input} k={kernel} s={stride} p={pad}");
                    }
                }
            }
        }
    }

    #[test]
    fn alexnet_conv1_shape() {
        assert_eq!(brute_force_positions(227, 11, 4, 0), 55);
        let net = bundled::load("alexnet").unwrap();
        assert_eq!(net.shape_of("conv1").unwrap().dims(), &[1, 96, 55, 55]);
        assert_eq!(net.shape_of("pool5").unwrap().dims(), &[1, 256, 6, 6]);
        assert_eq!(net.shape_of("fc8").unwrap().dims(), &[1, 1000]);
    }

    #[test]
    fn ceil_mode_pooling() {
        assert_eq!(pool_output_dim(112, 3, 2, 0, false), Some(55));
        assert_eq!(pool_output_dim(112, 3, 2, 0, true), Some(56));
        // last window would start in the padding
        assert_eq!(pool_output_dim(4, 2, 2, 1, true), Some(3));
        let net = bundled::load("googlenet").unwrap();
        assert_eq!(net.shape_of("pool2").unwrap().dims(), &[1, 192, 28, 28]);
        assert_eq!(net.shape_of("inception_3a_output").unwrap().dims(), &[1, 256, 28, 28]);
        assert_eq!(net.shape_of("pool5").unwrap().dims(), &[1, 1024, 1, 1]);
    }

    #[test]
    fn resnet_shapes() {
        let net = bundled::load("resnet18").unwrap();
        assert_eq!(net.shape_of("pool1").unwrap().dims(), &[1, 64, 56, 56]);
        assert_eq!(net.shape_of("res4a").unwrap().dims(), &[1, 256, 14, 14]);
        assert_eq!(net.shape_of("pool5").unwrap().dims(), &[1, 512, 1, 1]);
    }

    fn two_input_net(kind: LayerKind, a: &[usize], b: &[usize]) -> Result<NetworkGraph, GraphError> {
        let inputs = vec![
            GraphInput { name: "a".into(), shape: TensorShape::new(a.to_vec()).unwrap() },
            GraphInput { name: "b".into(), shape: TensorShape::new(b.to_vec()).unwrap() },
        ];
        NetworkGraph::with_io(
            "j",
            inputs,
            vec![LayerSpec::new("j", kind, &["a", "b"])],
            vec!["j".into()],
        )
    }

    #[test]
    fn eltwise_and_concat_shapes() {
        let net = two_input_net(LayerKind::EltwiseAdd, &[1, 64, 56, 56], &[1, 64, 56, 56]).unwrap();
        assert_eq!(net.shape_of("j").unwrap().dims(), &[1, 64, 56, 56]);
        let net = two_input_net(LayerKind::Concat, &[1, 64, 28, 28], &[1, 32, 28, 28]).unwrap();
        assert_eq!(net.shape_of("j").unwrap().dims(), &[1, 96, 28, 28]);
    }

    #[test]
    fn inconsistent_joins_are_shape_errors() {
        let e = two_input_net(LayerKind::EltwiseAdd, &[1, 64, 56, 56], &[1, 32, 56, 56]).unwrap_err();
        assert!(matches!(e, GraphError::Shape { .. }));
        let e = two_input_net(LayerKind::Concat, &[1, 64, 28, 28], &[1, 32, 14, 14]).unwrap_err();
        assert!(matches!(e, GraphError::Shape { .. }));
    }

    #[test]
    fn groups_must_divide_channels() {
        let inputs = vec![GraphInput { name: "data".into(), shape: TensorShape::new(vec![1, 3, 8, 8]).unwrap() }];
        let e = NetworkGraph::with_io(
            "g",
            inputs,
            vec![LayerSpec::conv("c", "data", 4, 3).with_groups(2)],
            vec!["c".into()],
        )
        .unwrap_err();
        assert!(matches!(e, GraphError::Hyperparams { .. }));
    }

    #[test]
    fn inference_is_deterministic() {
        for net in bundled::all() {
            assert_eq!(net.infer_shapes(), net.infer_shapes());
        }
    }
}
