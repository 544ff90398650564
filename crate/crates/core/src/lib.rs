//! Splitting DNN inference between an INT8 edge device and an FP32 cloud.
//!
//! The pipeline:
//!
//! * [`graph`] loads and validates topologies;
//! * [`partition`] picks candidate split points and describes what crosses
//!   the wire at each;
//! * [`cost`] turns per-layer profiles and a link model into latency
//!   estimates;
//! * [`tuner`] searches the candidates for the fastest and the best point;
//! * [`exec`] and [`harness`] actually run a split network, in-process, over
//!   a simulated link or over a loopback socket.

pub mod cost;
pub mod exec;
pub mod graph;
pub mod harness;
pub mod partition;
pub mod quant;
pub mod report;
pub mod synth;
pub mod tensor;
pub mod testnets;
pub mod tuner;
pub mod weights;

pub use cost::{CostEstimate, Environment, ProfileTable};
pub use exec::{ActivationParams, ExecError, SubnetEngine};
pub use graph::{
    DataType, GraphError, LayerKind, LayerSpec, NetworkGraph, ParamStats, TensorShape, CLOUD_ONLY,
};
pub use partition::{BlobDescriptor, CandidateRuleSet, PartitionError, PartitionPoint, Split};
pub use quant::{CalibrationPolicy, QuantError, QuantParams};
pub use tensor::{Blob, QuantizedTensor, Tensor};
pub use weights::{LayerWeights, Weights, WeightsError};
pub use tuner::{Objective, TuneResult};
