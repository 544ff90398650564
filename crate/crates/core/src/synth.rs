//! Seeded generation of synthetic weights and inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::TensorShape;
use crate::tensor::Tensor;

/// Environment variable that overrides the default seed.
pub const SEED_ENV: &str = "SPLITWIRE_SEED";
pub const DEFAULT_SEED: u64 = 42;

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Weights,
    Calibration,
    Inputs,
    Profile,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Weights => 0x5745_4947,
            Stream::Calibration => 0x4341_4c49,
            Stream::Inputs => 0x494e_5055,
            Stream::Profile => 0x5052_4f46,
        }
    }
}

pub fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ stream.tag().rotate_left(32));
    r.set_stream(stream.tag());
    r
}

/// `SPLITWIRE_SEED` if set and parseable, else the default.
pub fn seed_from_env() -> u64 {
    std::env::var(SEED_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_SEED)
}

/// `count` input tensors with elements uniform in [0, 1).
pub fn inputs(shape: &TensorShape, seed: u64, stream: Stream, count: usize) -> Vec<Tensor> {
    let mut r = rng(seed, stream);
    (0..count)
        .map(|_| {
            let data = (0..shape.element_count()).map(|_| r.gen::<f32>()).collect();
            Tensor::new(shape.clone(), data)
        })
        .collect()
}

pub fn input(shape: &TensorShape, seed: u64) -> Tensor {
    inputs(shape, seed, Stream::Inputs, 1).pop().unwrap()
}
