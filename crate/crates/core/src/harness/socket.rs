//! Loopback TCP transport. One connection carries one inference: the edge
//! writes its message and half-closes, the cloud replies and closes.

use std::io::{Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::time::Instant;

use crate::exec::SubnetEngine;
use crate::tensor::Tensor;

use super::{cloud_run, edge_run, receive_result, HarnessError, Link, SendReceipt};

pub struct TcpLink {
    stream: TcpStream,
}

impl TcpLink {
    pub fn connect(addr: SocketAddr) -> Result<Self, HarnessError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(TcpLink { stream })
    }

    pub fn from_stream(stream: TcpStream) -> Self {
        TcpLink { stream }
    }
}

impl Link for TcpLink {
    fn send(&mut self, message: Vec<u8>) -> Result<SendReceipt, HarnessError> {
        let start = Instant::now();
        self.stream.write_all(&message)?;
        self.stream.flush()?;
        self.stream.shutdown(Shutdown::Write)?;
        Ok(SendReceipt {
            bytes: message.len(),
            send_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    fn recv(&mut self) -> Result<Vec<u8>, HarnessError> {
        let mut buf = Vec::new();
        self.stream.read_to_end(&mut buf)?;
        if buf.is_empty() {
            return Err(HarnessError::NoReply);
        }
        Ok(buf)
    }
}

/// Serves `connections` inferences (forever if `None`), one at a time.
/// A bad request is reported to `on_error` and the connection dropped
/// without a reply; the server keeps going.
pub fn serve(
    listener: &TcpListener,
    engine: &SubnetEngine,
    connections: Option<usize>,
    mut on_error: impl FnMut(HarnessError),
) -> Result<usize, HarnessError> {
    let mut served = 0;
    for stream in listener.incoming() {
        let mut link = TcpLink::from_stream(stream?);
        match cloud_run(engine, &mut link) {
            Ok(_) => served += 1,
            Err(e) => on_error(e),
        }
        if connections.is_some_and(|n| served >= n) {
            break;
        }
    }
    Ok(served)
}

/// Edge side of one socket inference.
pub fn infer(
    engine: &SubnetEngine,
    input: &Tensor,
    addr: SocketAddr,
) -> Result<(Tensor, SendReceipt), HarnessError> {
    let mut link = TcpLink::connect(addr)?;
    let receipt = edge_run(engine, input, &mut link)?;
    Ok((receive_result(&mut link)?, receipt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::Environment;
    use crate::exec::calibrate_activations;
    use crate::harness::sim::{simulate, Timing};
    use crate::partition::{find_candidate, split, CandidateRuleSet};
    use crate::quant::CalibrationPolicy;
    use crate::synth::{self, Stream};
    use crate::testnets;
    use crate::weights::Weights;

    #[test]
    fn socket_equals_simulation() {
        let net = testnets::toy_classifier();
        let w = Weights::synthetic(&net, 12);
        let calib = synth::inputs(net.input_shape(), 12, Stream::Calibration, 4);
        let acts = calibrate_activations(&net, &w, &calib, CalibrationPolicy::MinMax).unwrap();
        let p = find_candidate(&net, &CandidateRuleSet::default(), "conv2").unwrap();
        let sp = split(&net, &p).unwrap();
        let edge = SubnetEngine::int8(sp.edge, &w, &acts, CalibrationPolicy::MinMax).unwrap();
        let cloud = SubnetEngine::fp32(sp.cloud, &w).unwrap();
        let inputs = synth::inputs(net.input_shape(), 12, Stream::Inputs, 3);

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::scope(|s| {
            let server = s.spawn(|| serve(&listener, &cloud, Some(inputs.len()), |e| panic!("{e}")));
            let env = Environment::new(250_000.0, 0.0).unwrap();
            for x in &inputs {
                let (out, receipt) = infer(&edge, x, addr).unwrap();
                let sim = simulate(&edge, &cloud, x, &env, Timing::Measured).unwrap();
                assert!(out.bit_eq(sim.output.as_ref().unwrap()));
                assert_eq!(receipt.bytes, sim.message_bytes);
            }
            assert_eq!(server.join().unwrap().unwrap(), inputs.len());
        });
    }

    #[test]
    fn corrupted_message_rejected() {
        let net = testnets::toy_classifier();
        let w = Weights::synthetic(&net, 12);
        let p = find_candidate(&net, &CandidateRuleSet::default(), "cloud-only").unwrap();
        let cloud = SubnetEngine::fp32(split(&net, &p).unwrap().cloud, &w).unwrap();
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::scope(|s| {
            let server = s.spawn(|| {
                let mut errors = Vec::new();
                let mut it = listener.incoming();
                let mut link = TcpLink::from_stream(it.next().unwrap().unwrap());
                if let Err(e) = cloud_run(&cloud, &mut link) {
                    errors.push(e);
                }
                errors
            });
            let x = synth::input(net.input_shape(), 1);
            let mut msg = super::super::wire::encode(&[crate::tensor::Blob::Fp32(x)]).unwrap();
            msg[20] ^= 1;
            let mut link = TcpLink::connect(addr).unwrap();
            link.send(msg).unwrap();
            assert!(matches!(link.recv(), Err(HarnessError::NoReply)));
            let errors = server.join().unwrap();
            assert!(matches!(
                errors[..],
                [HarnessError::Wire(super::super::wire::WireError::ChecksumError { .. })]
            ));
        });
    }
}
