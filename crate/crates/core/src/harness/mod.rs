//! Edge and cloud actors exchanging boundary messages over a link.
//!
//! The edge runs its INT8 engine, encodes the boundary blobs and sends one
//! message. The cloud decodes it, dequantizes INT8 blobs, finishes the
//! network in FP32 and answers with the final output as one FP32 blob.

pub mod sim;
pub mod socket;
pub mod wire;

use std::collections::VecDeque;
use std::net::SocketAddr;

use crate::cost::{CostError, Environment};
use crate::exec::{ExecError, SubnetEngine};
use crate::partition::PartitionError;
use crate::tensor::{Blob, Tensor};
use wire::WireError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("link i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("no message waiting on the link")]
    Empty,
    #[error("peer closed the connection without a reply")]
    NoReply,
}

/// How a message travelled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SendReceipt {
    pub bytes: usize,
    /// Virtual transfer time on a simulated link, wall-clock time on a
    /// socket.
    pub send_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinkModel {
    Simulated(Environment),
    Socket(SocketAddr),
}

/// One side's view of a bidirectional message link.
pub trait Link {
    fn send(&mut self, message: Vec<u8>) -> Result<SendReceipt, HarnessError>;
    fn recv(&mut self) -> Result<Vec<u8>, HarnessError>;
}

/// In-memory link with a virtual clock: a message of `n` bytes arrives
/// `n / uplink + rtt` after it was sent.
#[derive(Debug)]
pub struct SimLink {
    env: Environment,
    now_ms: f64,
    queue: VecDeque<(f64, Vec<u8>)>,
}

impl SimLink {
    pub fn new(env: Environment) -> Self {
        SimLink { env, now_ms: 0.0, queue: VecDeque::new() }
    }

    pub fn now_ms(&self) -> f64 {
        self.now_ms
    }

    pub fn advance(&mut self, ms: f64) {
        self.now_ms += ms;
    }
}

impl Link for SimLink {
    fn send(&mut self, message: Vec<u8>) -> Result<SendReceipt, HarnessError> {
        let send_ms = self.env.upload_ms(message.len());
        let receipt = SendReceipt { bytes: message.len(), send_ms };
        self.queue.push_back((self.now_ms + send_ms, message));
        Ok(receipt)
    }

    fn recv(&mut self) -> Result<Vec<u8>, HarnessError> {
        let (at, msg) = self.queue.pop_front().ok_or(HarnessError::Empty)?;
        self.now_ms = self.now_ms.max(at);
        Ok(msg)
    }
}

/// Runs the edge engine and encodes what it must transmit.
pub fn edge_message(engine: &SubnetEngine, input: &Tensor) -> Result<Vec<u8>, HarnessError> {
    let outputs = engine.run(std::slice::from_ref(input))?;
    Ok(wire::encode(&engine.emit_blobs(outputs)?)?)
}

/// Decodes a boundary message and finishes the network.
pub fn cloud_finish(engine: &SubnetEngine, message: &[u8]) -> Result<Tensor, HarnessError> {
    let blobs = wire::decode(message)?;
    let inputs = engine.accept_blobs(&blobs)?;
    let mut out = engine.run(&inputs)?;
    if out.len() != 1 {
        return Err(ExecError::OutputCount(out.len()).into());
    }
    Ok(out.pop().unwrap())
}

pub fn edge_run(
    engine: &SubnetEngine,
    input: &Tensor,
    link: &mut dyn Link,
) -> Result<SendReceipt, HarnessError> {
    let msg = edge_message(engine, input)?;
    link.send(msg)
}

/// Receives one boundary message, computes the result and sends it back.
pub fn cloud_run(engine: &SubnetEngine, link: &mut dyn Link) -> Result<Tensor, HarnessError> {
    let msg = link.recv()?;
    let out = cloud_finish(engine, &msg)?;
    link.send(wire::encode(&[Blob::Fp32(out.clone())])?)?;
    Ok(out)
}

/// Reads the cloud's reply on the edge side.
pub fn receive_result(link: &mut dyn Link) -> Result<Tensor, HarnessError> {
    let msg = link.recv()?;
    let mut blobs = wire::decode(&msg)?;
    if blobs.len() != 1 {
        return Err(ExecError::BoundaryMismatch {
            expected: "1 result blob".into(),
            got: format!("{} blobs", blobs.len()),
        }
        .into());
    }
    Ok(blobs.pop().unwrap().to_tensor())
}
