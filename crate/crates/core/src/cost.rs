//! Per-layer latency profiles and the link model behind every estimate.
//!
//! A partition's cost is the edge time of its edge layers, the upload time of
//! its boundary message and the cloud time of everything else:
//!
//! ```text
//! total = Σ edge_ms(edge layers) + (wire bytes / uplink + rtt) + Σ cloud_ms(cloud layers)
//! ```
//!
//! Downloading the edge model is a one-off deployment cost, so it is
//! reported as `edge_model_bytes` and kept out of `total_ms`.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::exec::{self, ExecError, SubnetEngine};
use crate::graph::NetworkGraph;
use crate::harness::wire;
use crate::partition::{self, PartitionError, PartitionPoint};
use crate::quant::CalibrationPolicy;
use crate::synth::{self, Stream};
use crate::tensor::Tensor;
use crate::weights::Weights;

/// Calibration batch used when profiling the INT8 path.
pub const PROFILE_CALIBRATION_BATCH: usize = 4;

/// Smallest time a profiled layer is credited with, in milliseconds.
pub const MIN_LAYER_MS: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum CostError {
    #[error("profile has no entry for layer `{0}`")]
    MissingProfileEntry(String),
    #[error("profile entry for `{layer}` is negative or not finite")]
    BadProfileEntry { layer: String },
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
    #[error("cannot parse bandwidth `{0}` (expected e.g. 250KB, 250KB/s, 2MB/s, 1000B)")]
    Bandwidth(String),
    #[error("trials must be at least 1")]
    NoTrials,
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Provenance {
    Measured,
    #[default]
    Loaded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEntry {
    pub layer: String,
    /// INT8 path on the edge device.
    pub edge_ms: f64,
    /// FP32 path in the cloud.
    pub cloud_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileTable {
    pub network: String,
    pub device: String,
    pub entries: Vec<ProfileEntry>,
    #[serde(skip)]
    pub provenance: Provenance,
}

impl ProfileTable {
    pub fn get(&self, layer: &str) -> Option<&ProfileEntry> {
        self.entries.iter().find(|e| e.layer == layer)
    }

    /// Per-layer `(edge_ms, cloud_ms)` in the network's layer order.
    pub fn resolve(&self, net: &NetworkGraph) -> Result<Vec<(f64, f64)>, CostError> {
        let by_name: HashMap<&str, &ProfileEntry> =
            self.entries.iter().map(|e| (e.layer.as_str(), e)).collect();
        net.layers()
            .iter()
            .map(|l| {
                let e = by_name
                    .get(l.name.as_str())
                    .ok_or_else(|| CostError::MissingProfileEntry(l.name.clone()))?;
                let ok = |v: f64| v.is_finite() && v >= 0.0;
                if !ok(e.edge_ms) || !ok(e.cloud_ms) {
                    return Err(CostError::BadProfileEntry { layer: l.name.clone() });
                }
                Ok((e.edge_ms, e.cloud_ms))
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes") + "\n"
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CostError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| CostError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CostError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CostError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut t: ProfileTable = serde_json::from_str(&text).map_err(|source| CostError::Json {
            path: path.display().to_string(),
            source,
        })?;
        t.provenance = Provenance::Loaded;
        Ok(t)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Median per-layer wall-clock times of the INT8 and FP32 reference paths,
/// with synthetic weights and inputs drawn from `seed`.
pub fn profile(net: &NetworkGraph, trials: usize, seed: u64) -> Result<ProfileTable, CostError> {
    let weights = Weights::synthetic(net, seed);
    let calib = synth::inputs(net.input_shape(), seed, Stream::Calibration, PROFILE_CALIBRATION_BATCH);
    let acts = exec::calibrate_activations(net, &weights, &calib, CalibrationPolicy::MinMax)?;
    let edge = SubnetEngine::int8(net.clone(), &weights, &acts, CalibrationPolicy::MinMax)?;
    let cloud = SubnetEngine::fp32(net.clone(), &weights)?;
    let input = synth::inputs(net.input_shape(), seed, Stream::Profile, 1).pop().unwrap();
    profile_engines(&edge, &cloud, &input, trials)
}

/// Profiles two whole-network engines layer by layer.
pub fn profile_engines(
    edge: &SubnetEngine,
    cloud: &SubnetEngine,
    input: &Tensor,
    trials: usize,
) -> Result<ProfileTable, CostError> {
    if trials == 0 {
        return Err(CostError::NoTrials);
    }
    let n = edge.graph().layers().len();
    let mut samples = [vec![Vec::with_capacity(trials); n], vec![Vec::with_capacity(trials); n]];
    for _ in 0..trials {
        for (side, engine) in [edge, cloud].into_iter().enumerate() {
            let mut i = 0;
            engine.run_observed(std::slice::from_ref(input), |_, _, d| {
                samples[side][i].push(ms(d));
                i += 1;
            })?;
        }
    }
    let [e, c] = samples;
    let entries = edge
        .graph()
        .layers()
        .iter()
        .zip(e.into_iter().zip(c))
        .map(|(l, (e, c))| ProfileEntry {
            layer: l.name.clone(),
            edge_ms: median(e).max(MIN_LAYER_MS),
            cloud_ms: median(c).max(MIN_LAYER_MS),
        })
        .collect();
    Ok(ProfileTable {
        network: edge.graph().name().to_string(),
        device: "local reference executor".to_string(),
        entries,
        provenance: Provenance::Measured,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub uplink_bytes_per_s: f64,
    pub fixed_rtt_ms: f64,
}

impl Environment {
    pub fn new(uplink_bytes_per_s: f64, fixed_rtt_ms: f64) -> Result<Self, CostError> {
        if uplink_bytes_per_s.is_nan() || uplink_bytes_per_s <= 0.0 {
            return Err(CostError::InvalidEnvironment(format!(
                "uplink must be positive, got {uplink_bytes_per_s}"
            )));
        }
        if !fixed_rtt_ms.is_finite() || fixed_rtt_ms < 0.0 {
            return Err(CostError::InvalidEnvironment(format!(
                "rtt must be non-negative, got {fixed_rtt_ms}"
            )));
        }
        Ok(Environment { uplink_bytes_per_s, fixed_rtt_ms })
    }

    pub fn upload_ms(&self, bytes: usize) -> f64 {
        bytes as f64 * 1e3 / self.uplink_bytes_per_s + self.fixed_rtt_ms
    }
}

/// Parses `250KB`, `250KB/s`, `1.5MB/s`, `9000B/s` or a bare byte rate.
/// KB and MB are decimal (1000 and 1,000,000 bytes).
pub fn parse_bandwidth(s: &str) -> Result<f64, CostError> {
    let err = || CostError::Bandwidth(s.to_string());
    let t = s.trim();
    let t = t.strip_suffix("/s").unwrap_or(t).trim_end();
    let upper = t.to_ascii_uppercase();
    let (num, mult) = if let Some(n) = upper.strip_suffix("MB") {
        (n, 1e6)
    } else if let Some(n) = upper.strip_suffix("KB") {
        (n, 1e3)
    } else if let Some(n) = upper.strip_suffix('B') {
        (n, 1.0)
    } else {
        (upper.as_str(), 1.0)
    };
    let v: f64 = num.trim().parse().map_err(|_| err())?;
    if !(v.is_finite() && v > 0.0) {
        return Err(err());
    }
    Ok(v * mult)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub edge_ms: f64,
    pub upload_ms: f64,
    pub cloud_ms: f64,
    pub total_ms: f64,
    /// Full boundary message, wire headers and checksum included.
    pub upload_bytes: usize,
    /// INT8 weights the edge device has to hold.
    pub edge_model_bytes: usize,
}

/// Layer masks and byte counts of a point, independent of the profile.
#[derive(Debug, Clone)]
pub struct PointCost {
    edge: Vec<bool>,
    upload_bytes: usize,
    edge_model_bytes: usize,
}

impl PointCost {
    pub fn new(net: &NetworkGraph, point: &PartitionPoint) -> Result<Self, CostError> {
        let edge = partition::edge_set(net, point)?;
        let edge_params: usize = net
            .info()
            .iter()
            .zip(&edge)
            .filter(|(_, &e)| e)
            .map(|(i, _)| i.param_count())
            .sum();
        Ok(PointCost {
            edge,
            upload_bytes: wire::message_len(&point.transmit),
            edge_model_bytes: edge_params,
        })
    }

    pub fn edge_mask(&self) -> &[bool] {
        &self.edge
    }

    /// `layer_ms` comes from [`ProfileTable::resolve`].
    pub fn estimate(&self, layer_ms: &[(f64, f64)], env: &Environment) -> CostEstimate {
        let mut edge_ms = 0.0;
        let mut cloud_ms = 0.0;
        for (&(e, c), &on_edge) in layer_ms.iter().zip(&self.edge) {
            if on_edge {
                edge_ms += e;
            } else {
                cloud_ms += c;
            }
        }
        let upload_ms = env.upload_ms(self.upload_bytes);
        CostEstimate {
            edge_ms,
            upload_ms,
            cloud_ms,
            total_ms: edge_ms + upload_ms + cloud_ms,
            upload_bytes: self.upload_bytes,
            edge_model_bytes: self.edge_model_bytes,
        }
    }
}

pub fn predict_performance(
    net: &NetworkGraph,
    point: &PartitionPoint,
    profiles: &ProfileTable,
    env: &Environment,
) -> Result<CostEstimate, CostError> {
    let layer_ms = profiles.resolve(net)?;
    Ok(PointCost::new(net, point)?.estimate(&layer_ms, env))
}

/// Seeded synthetic profile: edge and cloud times uniform in the given
/// ranges. Used by tests and benchmarks.
pub fn random_profile(
    net: &NetworkGraph,
    seed: u64,
    edge_ms: std::ops::Range<f64>,
    cloud_ms: std::ops::Range<f64>,
) -> ProfileTable {
    use rand::Rng;
    let mut r = synth::rng(seed, Stream::Profile);
    ProfileTable {
        network: net.name().to_string(),
        device: format!("synthetic seed {seed}"),
        entries: net
            .layers()
            .iter()
            .map(|l| ProfileEntry {
                layer: l.name.clone(),
                edge_ms: r.gen_range(edge_ms.clone()),
                cloud_ms: r.gen_range(cloud_ms.clone()),
            })
            .collect(),
        provenance: Provenance::Loaded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{candidates, CandidateRuleSet};
    use crate::testnets;

    fn flat(net: &NetworkGraph, edge: f64, cloud: f64) -> ProfileTable {
        ProfileTable {
            network: net.name().into(),
            device: "flat".into(),
            entries: net
                .layers()
                .iter()
                .map(|l| ProfileEntry { layer: l.name.clone(), edge_ms: edge, cloud_ms: cloud })
                .collect(),
            provenance: Provenance::Loaded,
        }
    }

    #[test]
    fn bandwidth_units() {
        assert_eq!(parse_bandwidth("250KB").unwrap(), 250_000.0);
        assert_eq!(parse_bandwidth("250KB/s").unwrap(), 250_000.0);
        assert_eq!(parse_bandwidth("1.5MB/s").unwrap(), 1_500_000.0);
        assert_eq!(parse_bandwidth("9000B/s").unwrap(), 9000.0);
        assert_eq!(parse_bandwidth("70kb").unwrap(), 70_000.0);
        assert!(parse_bandwidth("fast").is_err());
        assert!(parse_bandwidth("-3KB").is_err());
    }

    #[test]
    fn linear_link_arithmetic() {
        // 10 ms edge + 100,000 B at 250,000 B/s + 5 ms cloud
        let env = Environment::new(250_000.0, 0.0).unwrap();
        assert_eq!(10.0 + env.upload_ms(100_000) + 5.0, 415.0);
        assert!(Environment::new(0.0, 0.0).is_err());
        assert!(Environment::new(1.0, -1.0).is_err());
    }

    #[test]
    fn estimates_decompose_and_scale() {
        let net = testnets::toy_classifier();
        let prof = random_profile(&net, 3, 0.1..2.0, 0.01..0.5);
        let env = Environment::new(180_000.0, 2.0).unwrap();
        let half = Environment::new(90_000.0, 0.0).unwrap();
        let full = Environment::new(180_000.0, 0.0).unwrap();
        for p in candidates(&net, &CandidateRuleSet::default()) {
            let c = predict_performance(&net, &p, &prof, &env).unwrap();
            assert_eq!(c.total_ms, c.edge_ms + c.upload_ms + c.cloud_ms);
            assert_eq!(c.upload_bytes, wire::message_len(&p.transmit));
            let a = predict_performance(&net, &p, &prof, &full).unwrap();
            let b = predict_performance(&net, &p, &prof, &half).unwrap();
            assert!((b.upload_ms - 2.0 * a.upload_ms).abs() <= 1e-9 * a.upload_ms);
            assert_eq!((a.edge_ms, a.cloud_ms), (b.edge_ms, b.cloud_ms));
        }
    }

    #[test]
    fn boundary_points() {
        let net = testnets::toy_classifier();
        let prof = flat(&net, 1.0, 0.5);
        let env = Environment::new(1000.0, 0.0).unwrap();
        let c = candidates(&net, &CandidateRuleSet::default());
        let cloud = predict_performance(&net, &c[0], &prof, &env).unwrap();
        assert_eq!(cloud.edge_ms, 0.0);
        assert_eq!(cloud.cloud_ms, 0.5 * net.layers().len() as f64);
        assert_eq!(cloud.upload_bytes, 7 + 2 + 16 + 3 * 16 * 16 * 4 + 4);
        let edge = predict_performance(&net, c.last().unwrap(), &prof, &env).unwrap();
        assert_eq!(edge.cloud_ms, 0.0);
        // INT8 scores: 10 codes + 12 bytes of thresholds
        assert_eq!(edge.upload_bytes, 7 + 2 + 8 + 10 + 12 + 4);
        assert_eq!(edge.edge_model_bytes, net.total_params());
    }

    #[test]
    fn missing_entry() {
        let net = testnets::toy_classifier();
        let mut prof = flat(&net, 1.0, 1.0);
        prof.entries.pop();
        let env = Environment::new(1000.0, 0.0).unwrap();
        let p = &candidates(&net, &CandidateRuleSet::default())[0];
        assert!(matches!(
            predict_performance(&net, p, &prof, &env),
            Err(CostError::MissingProfileEntry(l)) if l == "fc"
        ));
    }

    #[test]
    fn measured_profile_round_trip() {
        let net = testnets::toy_classifier();
        let t = profile(&net, 3, 1).unwrap();
        assert_eq!(t.provenance, Provenance::Measured);
        assert_eq!(t.entries.len(), net.layers().len());
        assert!(t.entries.iter().all(|e| e.edge_ms > 0.0 && e.cloud_ms > 0.0));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        t.save(&path).unwrap();
        let back = ProfileTable::load(&path).unwrap();
        assert_eq!(back.provenance, Provenance::Loaded);
        assert_eq!(back.entries, t.entries);
        assert!(matches!(profile(&net, 0, 1), Err(CostError::NoTrials)));
    }
}
