use criterion::{black_box, criterion_group, criterion_main, Criterion};
use splitwire::cost::{random_profile, Environment};
use splitwire::graph::bundled;
use splitwire::harness::wire;
use splitwire::partition::{candidates, CandidateRuleSet};
use splitwire::tuner::{auto_tune, Objective};
use splitwire::{Blob, Tensor};

fn tune(c: &mut Criterion) {
    let env = Environment::new(250_000.0, 0.0).unwrap();
    let rules = CandidateRuleSet::default();
    for name in bundled::NAMES {
        let net = bundled::load(name).unwrap();
        let prof = random_profile(&net, 1, 0.01..20.0, 0.001..2.0);
        c.bench_function(&format!("auto_tune/{name}"), |b| {
            b.iter(|| auto_tune(black_box(&net), &rules, &prof, &env, Objective::Fastest).unwrap())
        });
    }
    let net = bundled::load("googlenet").unwrap();
    c.bench_function("candidates/googlenet", |b| b.iter(|| candidates(black_box(&net), &rules)));
}

fn codec(c: &mut Criterion) {
    // AlexNet's input-sized FP32 blob
    let t = Tensor::from_vec(&[1, 3, 227, 227], (0..3 * 227 * 227).map(|i| i as f32).collect());
    let blobs = [Blob::Fp32(t)];
    let msg = wire::encode(&blobs).unwrap();
    c.bench_function("wire/encode", |b| b.iter(|| wire::encode(black_box(&blobs)).unwrap()));
    c.bench_function("wire/decode", |b| b.iter(|| wire::decode(black_box(&msg)).unwrap()));
}

criterion_group!(benches, tune, codec);
criterion_main!(benches);
