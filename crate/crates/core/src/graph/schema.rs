//! Topology JSON reader/writer.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{GraphError, GraphInput, Hyperparams, LayerKind, LayerSpec, NetworkGraph, TensorShape};

#[derive(Deserialize)]
struct RawNetwork {
    name: String,
    input_shape: Vec<usize>,
    #[serde(default = "default_input_name")]
    input_name: String,
    layers: Vec<RawLayer>,
}

fn default_input_name() -> String {
    "data".to_string()
}

#[derive(Deserialize, Serialize)]
#[serde(untagged)]
enum Pair {
    One(usize),
    Two([usize; 2]),
}

impl Pair {
    fn get(&self) -> [usize; 2] {
        match *self {
            Pair::One(v) => [v, v],
            Pair::Two(v) => v,
        }
    }

    fn from(v: [usize; 2]) -> Pair {
        if v[0] == v[1] {
            Pair::One(v[0])
        } else {
            Pair::Two(v)
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    name: String,
    kind: String,
    #[serde(default)]
    inputs: Vec<String>,
    kernel: Option<Pair>,
    stride: Option<Pair>,
    pad: Option<Pair>,
    groups: Option<usize>,
    out_channels: Option<usize>,
    pool: Option<String>,
    ceil_mode: Option<bool>,
    lrn_size: Option<usize>,
    alpha: Option<f32>,
    beta: Option<f32>,
    k: Option<f32>,
    ratio: Option<f32>,
}

fn parse_kind(layer: &RawLayer) -> Result<LayerKind, GraphError> {
    let bad = |reason: String| GraphError::Parse(format!("layer `{}`: {reason}", layer.name));
    Ok(match layer.kind.as_str() {
        "Convolution" => LayerKind::Convolution,
        "FullyConnected" | "InnerProduct" => LayerKind::FullyConnected,
        "ReLU" => LayerKind::ReLU,
        "MaxPool" => LayerKind::MaxPool,
        "AvgPool" => LayerKind::AvgPool,
        "Pooling" => match layer.pool.as_deref() {
            Some("max") | Some("MAX") => LayerKind::MaxPool,
            Some("ave") | Some("avg") | Some("AVE") => LayerKind::AvgPool,
            other => return Err(bad(format!("unknown pool type {other:?}"))),
        },
        "LRN" => LayerKind::LRN,
        "Dropout" => LayerKind::Dropout,
        "Concat" => LayerKind::Concat,
        "EltwiseAdd" | "Eltwise" => LayerKind::EltwiseAdd,
        "Softmax" => LayerKind::Softmax,
        other => return Err(bad(format!("unknown kind `{other}`"))),
    })
}

pub fn from_json_str(text: &str) -> Result<NetworkGraph, GraphError> {
    let raw: RawNetwork =
        serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
    let shape = TensorShape::new(raw.input_shape).map_err(GraphError::Parse)?;
    let mut layers = Vec::with_capacity(raw.layers.len());
    for l in raw.layers {
        let kind = parse_kind(&l)?;
        let d = Hyperparams::default();
        let hyper = Hyperparams {
            kernel: l.kernel.as_ref().map(Pair::get),
            stride: l.stride.as_ref().map_or(d.stride, Pair::get),
            pad: l.pad.as_ref().map_or(d.pad, Pair::get),
            groups: l.groups.unwrap_or(d.groups),
            out_channels: l.out_channels,
            ceil_mode: l.ceil_mode.unwrap_or(d.ceil_mode),
            lrn_size: l.lrn_size.unwrap_or(d.lrn_size),
            alpha: l.alpha.unwrap_or(d.alpha),
            beta: l.beta.unwrap_or(d.beta),
            k: l.k.unwrap_or(d.k),
            dropout_ratio: l.ratio.unwrap_or(d.dropout_ratio),
        };
        layers.push(LayerSpec {
            name: l.name,
            kind,
            inputs: l.inputs,
            hyper,
        });
    }
    NetworkGraph::new(
        raw.name,
        GraphInput {
            name: raw.input_name,
            shape,
        },
        layers,
    )
}

fn layer_to_value(l: &LayerSpec) -> Value {
    let h = &l.hyper;
    let mut m = Map::new();
    m.insert("name".into(), l.name.clone().into());
    m.insert("kind".into(), format!("{:?}", l.kind).into());
    m.insert("inputs".into(), l.inputs.clone().into());
    let pair = |v: [usize; 2]| serde_json::to_value(Pair::from(v)).unwrap();
    match l.kind {
        LayerKind::Convolution | LayerKind::MaxPool | LayerKind::AvgPool => {
            if let Some(c) = h.out_channels {
                m.insert("out_channels".into(), c.into());
            }
            if let Some(k) = h.kernel {
                m.insert("kernel".into(), pair(k));
            }
            m.insert("stride".into(), pair(h.stride));
            m.insert("pad".into(), pair(h.pad));
            if l.kind == LayerKind::Convolution {
                m.insert("groups".into(), h.groups.into());
            } else if h.ceil_mode {
                m.insert("ceil_mode".into(), true.into());
            }
        }
        LayerKind::FullyConnected => {
            if let Some(c) = h.out_channels {
                m.insert("out_channels".into(), c.into());
            }
        }
        LayerKind::LRN => {
            m.insert("lrn_size".into(), h.lrn_size.into());
            m.insert("alpha".into(), h.alpha.into());
            m.insert("beta".into(), h.beta.into());
            m.insert("k".into(), h.k.into());
        }
        LayerKind::Dropout => {
            m.insert("ratio".into(), h.dropout_ratio.into());
        }
        _ => {}
    }
    Value::Object(m)
}

/// Serializes a whole network in the same schema `from_json_str` reads.
/// One layer per line keeps the bundled files diffable.
pub fn to_json_string(net: &NetworkGraph) -> String {
    let input = &net.inputs()[0];
    let mut out = String::from("{\n");
    out += &format!("  \"name\": {},\n", Value::from(net.name()));
    if input.name != "data" {
        out += &format!("  \"input_name\": {},\n", Value::from(input.name.as_str()));
    }
    out += &format!(
        "  \"input_shape\": {},\n  \"layers\": [\n",
        serde_json::to_string(input.shape.dims()).unwrap()
    );
    let rows: Vec<String> = net
        .layers()
        .iter()
        .map(|l| format!("    {}", layer_to_value(l)))
        .collect();
    out += &rows.join(",\n");
    out += "\n  ]\n}\n";
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::bundled;

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(from_json_str("{"), Err(GraphError::Parse(_))));
        let unknown = r#"{"name":"x","input_shape":[1,4],"layers":[{"name":"a","kind":"Gelu","inputs":["data"]}]}"#;
        assert!(matches!(from_json_str(unknown), Err(GraphError::Parse(_))));
    }

    #[test]
    fn caffe_style_pooling_kind() {
        let text = r#"{"name":"p","input_shape":[1,2,4,4],"layers":[
            {"name":"p1","kind":"Pooling","pool":"max","inputs":["data"],"kernel":2,"stride":2}]}"#;
        let net = from_json_str(text).unwrap();
        assert_eq!(net.layers()[0].kind, LayerKind::MaxPool);
        assert_eq!(net.shape_of("p1").unwrap().dims(), &[1, 2, 2, 2]);
    }

    #[test]
    fn round_trip_bundled() {
        for net in bundled::all() {
            let again = from_json_str(&to_json_string(&net)).unwrap();
            assert_eq!(again, net, "{}", net.name());
        }
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("googlenet.json");
        let net = bundled::load("googlenet").unwrap();
        crate::graph::save_network(&net, &path).unwrap();
        assert_eq!(crate::graph::load_network(&path).unwrap(), net);
    }
}
