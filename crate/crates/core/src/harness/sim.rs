//! Discrete-event simulation of one collaborative inference.
//!
//! Two actors share a virtual clock and talk only through scheduled events:
//!
//! ```text
//! t=0            edge starts
//! t=E            edge done, message handed to the link
//! t=E+U          message delivered (U = bytes / uplink + rtt)
//! t=E+U+C        cloud done
//! ```
//!
//! Compute durations come from a profile table, or from wall-clock
//! measurement of the actual engine runs.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::cost::{CostError, Environment, PointCost, ProfileTable};
use crate::exec::SubnetEngine;
use crate::graph::{DataType, NetworkGraph};
use crate::partition::PartitionPoint;
use crate::quant::QuantParams;
use crate::tensor::{Blob, QuantizedTensor, Tensor};

use super::{cloud_finish, edge_message, wire, HarnessError};

#[derive(Debug, Clone, Copy)]
pub enum Timing<'a> {
    Profile(&'a ProfileTable),
    Measured,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Actor {
    Edge,
    Link,
    Cloud,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub at_ms: f64,
    pub actor: Actor,
    pub what: &'static str,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    /// Final network output; `None` in dry-run mode.
    pub output: Option<Tensor>,
    pub edge_ms: f64,
    pub upload_ms: f64,
    pub cloud_ms: f64,
    /// Virtual time at which the cloud finished.
    pub total_ms: f64,
    pub message_bytes: usize,
    pub trace: Vec<TraceEvent>,
}

enum Event {
    EdgeStart,
    EdgeDone(Vec<u8>),
    Delivered(Vec<u8>),
    CloudDone(Option<Tensor>),
}

struct Scheduled {
    at: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // reversed: BinaryHeap is a max-heap, we want the earliest event first
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.total_cmp(&self.at).then(other.seq.cmp(&self.seq))
    }
}

struct Queue {
    heap: BinaryHeap<Scheduled>,
    seq: u64,
}

impl Queue {
    fn push(&mut self, at: f64, event: Event) {
        self.heap.push(Scheduled { at, seq: self.seq, event });
        self.seq += 1;
    }
}

type EdgeStep<'a> = dyn FnMut() -> Result<(Vec<u8>, f64), HarnessError> + 'a;
type CloudStep<'a> = dyn FnMut(&[u8]) -> Result<(Option<Tensor>, f64), HarnessError> + 'a;

fn run_events(
    env: &Environment,
    edge: &mut EdgeStep<'_>,
    cloud: &mut CloudStep<'_>,
) -> Result<SimOutcome, HarnessError> {
    let mut q = Queue { heap: BinaryHeap::new(), seq: 0 };
    let mut out = SimOutcome {
        output: None,
        edge_ms: 0.0,
        upload_ms: 0.0,
        cloud_ms: 0.0,
        total_ms: 0.0,
        message_bytes: 0,
        trace: Vec::new(),
    };
    q.push(0.0, Event::EdgeStart);
    while let Some(Scheduled { at: now, event, .. }) = q.heap.pop() {
        match event {
            Event::EdgeStart => {
                out.trace.push(TraceEvent { at_ms: now, actor: Actor::Edge, what: "start" });
                let (msg, ms) = edge()?;
                out.edge_ms = ms;
                q.push(now + ms, Event::EdgeDone(msg));
            }
            Event::EdgeDone(msg) => {
                out.trace.push(TraceEvent { at_ms: now, actor: Actor::Edge, what: "send" });
                out.message_bytes = msg.len();
                out.upload_ms = env.upload_ms(msg.len());
                q.push(now + out.upload_ms, Event::Delivered(msg));
            }
            Event::Delivered(msg) => {
                out.trace.push(TraceEvent { at_ms: now, actor: Actor::Link, what: "delivered" });
                let (result, ms) = cloud(&msg)?;
                out.cloud_ms = ms;
                q.push(now + ms, Event::CloudDone(result));
            }
            Event::CloudDone(result) => {
                out.trace.push(TraceEvent { at_ms: now, actor: Actor::Cloud, what: "done" });
                out.output = result;
                out.total_ms = now;
            }
        }
    }
    Ok(out)
}

fn profiled_ms(
    profile: &ProfileTable,
    net: &NetworkGraph,
    pick: impl Fn(&crate::cost::ProfileEntry) -> f64,
) -> Result<f64, HarnessError> {
    let mut total = 0.0;
    for l in net.layers() {
        let e = profile
            .get(&l.name)
            .ok_or_else(|| CostError::MissingProfileEntry(l.name.clone()))?;
        total += pick(e);
    }
    Ok(total)
}

/// Runs both engines for real under the virtual clock.
pub fn simulate(
    edge: &SubnetEngine,
    cloud: &SubnetEngine,
    input: &Tensor,
    env: &Environment,
    timing: Timing<'_>,
) -> Result<SimOutcome, HarnessError> {
    crate::exec::check_boundary(edge, cloud)?;
    let mut edge_step = || {
        let start = Instant::now();
        let msg = edge_message(edge, input)?;
        let ms = match timing {
            Timing::Profile(p) => profiled_ms(p, edge.graph(), |e| e.edge_ms)?,
            Timing::Measured => start.elapsed().as_secs_f64() * 1e3,
        };
        Ok((msg, ms))
    };
    let mut cloud_step = |msg: &[u8]| {
        let start = Instant::now();
        let out = cloud_finish(cloud, msg)?;
        let ms = match timing {
            Timing::Profile(p) => profiled_ms(p, cloud.graph(), |e| e.cloud_ms)?,
            Timing::Measured => start.elapsed().as_secs_f64() * 1e3,
        };
        Ok((Some(out), ms))
    };
    run_events(env, &mut edge_step, &mut cloud_step)
}

/// Placeholder blob with the descriptor's shape and precision.
fn placeholder(desc: &crate::partition::BlobDescriptor) -> Blob {
    match desc.dtype {
        DataType::Fp32 => Blob::Fp32(Tensor::zeros(desc.shape.clone())),
        DataType::Int8 => Blob::Int8(QuantizedTensor::new(
            desc.shape.clone(),
            vec![0; desc.shape.element_count()],
            QuantParams::int8(0.0, 1.0).expect("valid thresholds"),
        )),
    }
}

/// Simulates a point without executing any layer: compute times come from
/// the profile and the message carries placeholder blobs of the real shapes
/// and precisions, so its length is exact.
pub fn simulate_dry_run(
    net: &NetworkGraph,
    point: &PartitionPoint,
    profile: &ProfileTable,
    env: &Environment,
) -> Result<SimOutcome, HarnessError> {
    let layer_ms = profile.resolve(net)?;
    let mask = PointCost::new(net, point)?.edge_mask().to_vec();
    let side_ms = |edge_side: bool| {
        layer_ms
            .iter()
            .zip(&mask)
            .filter(|(_, &e)| e == edge_side)
            .map(|(&(e, c), _)| if edge_side { e } else { c })
            .sum::<f64>()
    };
    let (edge_ms, cloud_ms) = (side_ms(true), side_ms(false));
    let blobs: Vec<Blob> = point.transmit.iter().map(placeholder).collect();
    let mut edge_step = || Ok((wire::encode(&blobs)?, edge_ms));
    let mut cloud_step = |msg: &[u8]| {
        let got = wire::decode(msg)?;
        debug_assert_eq!(got.len(), point.transmit.len());
        Ok((None, cloud_ms))
    };
    run_events(env, &mut edge_step, &mut cloud_step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{predict_performance, random_profile};
    use crate::partition::{candidates, split, CandidateRuleSet};
    use crate::testnets;
    use crate::weights::Weights;

    #[test]
    fn dry_run_matches_prediction() {
        let net = testnets::alexnet_mini();
        let prof = random_profile(&net, 2, 0.5..3.0, 0.05..0.3);
        let env = Environment::new(180_000.0, 1.5).unwrap();
        for p in candidates(&net, &CandidateRuleSet::default()) {
            let sim = simulate_dry_run(&net, &p, &prof, &env).unwrap();
            let pred = predict_performance(&net, &p, &prof, &env).unwrap();
            assert_eq!(sim.total_ms, pred.total_ms, "{}", p.layer);
            assert_eq!(sim.message_bytes, pred.upload_bytes);
            assert_eq!(sim.trace.len(), 4);
        }
    }

    #[test]
    fn profiled_real_run_matches_prediction() {
        let net = testnets::toy_classifier();
        let w = Weights::synthetic(&net, 3);
        let prof = random_profile(&net, 3, 0.5..3.0, 0.05..0.3);
        let env = Environment::new(70_000.0, 0.0).unwrap();
        let x = crate::synth::input(net.input_shape(), 3);
        let acts = crate::exec::calibrate_activations(
            &net,
            &w,
            std::slice::from_ref(&x),
            crate::quant::CalibrationPolicy::MinMax,
        )
        .unwrap();
        for p in candidates(&net, &CandidateRuleSet::default()) {
            let sp = split(&net, &p).unwrap();
            let edge = SubnetEngine::int8(sp.edge, &w, &acts, crate::quant::CalibrationPolicy::MinMax).unwrap();
            let cloud = SubnetEngine::fp32(sp.cloud, &w).unwrap();
            let sim = simulate(&edge, &cloud, &x, &env, Timing::Profile(&prof)).unwrap();
            let pred = predict_performance(&net, &p, &prof, &env).unwrap();
            assert_eq!(sim.total_ms, pred.total_ms);
            assert!(sim.output.is_some());
        }
    }
}
