//! Partition search: evaluate every candidate, pick the fastest point and
//! the best point for the chosen objective.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{CostError, CostEstimate, Environment, PointCost, ProfileTable};
use crate::exec::{self, ActivationParams, ExecError, SubnetEngine};
use crate::graph::NetworkGraph;
use crate::partition::{self, CandidateRuleSet, PartitionError, PartitionPoint};
use crate::quant::CalibrationPolicy;
use crate::tensor::Tensor;
use crate::weights::Weights;

#[derive(Debug, thiserror::Error)]
pub enum TuneError {
    #[error("network has no candidate partition points")]
    NoCandidates,
    #[error("invalid objective `{0}` (expected fastest, minupload or privacy:<budget>ms)")]
    InvalidObjective(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub enum Objective {
    /// Lowest predicted end-to-end latency.
    Fastest,
    /// Fewest bytes on the wire; ties go to the faster point.
    #[default]
    MinUpload,
    /// Fewest bytes among points within the latency budget; ties go to the
    /// deeper point.
    PrivacyUnderBudget(f64),
}


impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Objective::Fastest => write!(f, "fastest"),
            Objective::MinUpload => write!(f, "minupload"),
            Objective::PrivacyUnderBudget(b) => write!(f, "privacy:{b}ms"),
        }
    }
}

impl FromStr for Objective {
    type Err = TuneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || TuneError::InvalidObjective(s.to_string());
        match s.trim().to_ascii_lowercase().as_str() {
            "fastest" => Ok(Objective::Fastest),
            "minupload" => Ok(Objective::MinUpload),
            other => {
                let budget = other.strip_prefix("privacy:").ok_or_else(err)?;
                let budget = budget.strip_suffix("ms").unwrap_or(budget);
                let v: f64 = budget.trim().parse().map_err(|_| err())?;
                if !(v.is_finite() && v > 0.0) {
                    return Err(err());
                }
                Ok(Objective::PrivacyUnderBudget(v))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub point: PartitionPoint,
    pub cost: CostEstimate,
    /// Share of all parameters that stays off the edge device.
    pub storage_reduction: f64,
    /// FP32 vs collaborative argmax agreement, when measured.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub network: String,
    pub environment: Environment,
    pub objective: Objective,
    pub evaluations: Vec<Evaluation>,
    /// Index into `evaluations`.
    pub fastest: usize,
    /// Index into `evaluations`.
    pub best: usize,
    pub baseline_cloud_only_ms: f64,
    pub speedup: f64,
    /// The privacy budget could not be met; `best` fell back to `fastest`.
    pub infeasible: bool,
}

impl TuneResult {
    pub fn fastest(&self) -> &Evaluation {
        &self.evaluations[self.fastest]
    }

    pub fn best(&self) -> &Evaluation {
        &self.evaluations[self.best]
    }
}

/// Index of the minimal total, earliest on ties.
pub fn argmin_total(costs: &[CostEstimate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in costs.iter().enumerate() {
        if best.is_none_or(|b| c.total_ms < costs[b].total_ms) {
            best = Some(i);
        }
    }
    best
}

/// Best index for `objective` and whether its constraint was infeasible.
pub fn select(costs: &[CostEstimate], objective: Objective) -> Option<(usize, bool)> {
    let fastest = argmin_total(costs)?;
    let pick = match objective {
        Objective::Fastest => Some(fastest),
        Objective::MinUpload => (0..costs.len()).min_by(|&a, &b| {
            let (ca, cb) = (&costs[a], &costs[b]);
            ca.upload_bytes
                .cmp(&cb.upload_bytes)
                .then(ca.total_ms.total_cmp(&cb.total_ms))
                .then(a.cmp(&b))
        }),
        Objective::PrivacyUnderBudget(budget) => (0..costs.len())
            .filter(|&i| costs[i].total_ms <= budget)
            .min_by(|&a, &b| costs[a].upload_bytes.cmp(&costs[b].upload_bytes).then(b.cmp(&a))),
    };
    Some(match pick {
        Some(i) => (i, false),
        None => (fastest, true),
    })
}

pub fn auto_tune(
    net: &NetworkGraph,
    rules: &CandidateRuleSet,
    profiles: &ProfileTable,
    env: &Environment,
    objective: Objective,
) -> Result<TuneResult, TuneError> {
    let points = partition::candidates(net, rules);
    tune_points(net, points, profiles, env, objective)
}

/// Evaluates an explicit point list. The first point is taken as the
/// baseline the speed-up is measured against.
pub fn tune_points(
    net: &NetworkGraph,
    points: Vec<PartitionPoint>,
    profiles: &ProfileTable,
    env: &Environment,
    objective: Objective,
) -> Result<TuneResult, TuneError> {
    if points.is_empty() {
        return Err(TuneError::NoCandidates);
    }
    let layer_ms = profiles.resolve(net)?;
    let evaluations = points
        .into_par_iter()
        .map(|point| {
            let cost = PointCost::new(net, &point)?.estimate(&layer_ms, env);
            Ok(Evaluation {
                storage_reduction: net.storage_reduction(cost.edge_model_bytes),
                point,
                cost,
                accuracy: None,
            })
        })
        .collect::<Result<Vec<_>, CostError>>()?;
    let costs: Vec<CostEstimate> = evaluations.iter().map(|e| e.cost).collect();
    let fastest = argmin_total(&costs).expect("non-empty");
    let (best, infeasible) = select(&costs, objective).expect("non-empty");
    let baseline = evaluations
        .iter()
        .find(|e| e.point.is_cloud_only())
        .unwrap_or(&evaluations[0])
        .cost
        .total_ms;
    Ok(TuneResult {
        network: net.name().to_string(),
        environment: *env,
        objective,
        speedup: baseline / costs[fastest].total_ms,
        baseline_cloud_only_ms: baseline,
        evaluations,
        fastest,
        best,
        infeasible,
    })
}

/// Fraction of inputs whose collaborative argmax at `point` matches the
/// full FP32 network.
pub fn accuracy_proxy(
    net: &NetworkGraph,
    weights: &Weights,
    activations: &ActivationParams,
    point: &PartitionPoint,
    inputs: &[Tensor],
) -> Result<f64, TuneError> {
    let full = SubnetEngine::fp32(net.clone(), weights)?;
    let sp = partition::Split::from_edge_set(net, &partition::edge_set(net, point)?)?;
    let edge = SubnetEngine::int8(sp.edge, weights, activations, CalibrationPolicy::MinMax)?;
    let cloud = SubnetEngine::fp32(sp.cloud, weights)?;
    let mut agree = 0usize;
    for x in inputs {
        let a = exec::run_fp32(&full, x)?;
        let b = exec::run_collaborative(&edge, &cloud, x)?;
        agree += (a.argmax() == b.argmax()) as usize;
    }
    Ok(agree as f64 / inputs.len().max(1) as f64)
}

/// Fills the accuracy column of every evaluation.
pub fn attach_accuracy(
    result: &mut TuneResult,
    net: &NetworkGraph,
    weights: &Weights,
    activations: &ActivationParams,
    inputs: &[Tensor],
) -> Result<(), TuneError> {
    for e in &mut result.evaluations {
        e.accuracy = Some(accuracy_proxy(net, weights, activations, &e.point, inputs)?);
    }
    Ok(())
}
