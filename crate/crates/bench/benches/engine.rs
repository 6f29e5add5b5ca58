// SPDX-License-Identifier: Apache-2.0

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use dmis_core::ad;
use dmis_core::mesh::Triangulation;
use dmis_core::pde::{Benchmark, Collocation, PdeProblem, CORNER_IDS};
use dmis_core::sampler::{DmisConfig, SamplerState};
use dmis_core::MlpParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn jets(c: &mut Criterion) {
    let net = MlpParams::init(3, 32, 1, 0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let points: Vec<(f64, f64)> = (0..512).map(|_| (rng.random(), rng.random_range(-1.0..1.0))).collect();
    let mut group = c.benchmark_group("jets_512_points");
    for order in [0, 2, 3] {
        group.bench_function(format!("x_order_{order}"), |b| {
            b.iter(|| ad::eval_jets(black_box(&net), black_box(&points), order).unwrap())
        });
    }
    group.finish();
}

fn mesh_build(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("mesh_build");
    for n in [500, 1000, 4000] {
        let points: Vec<(usize, f64, f64)> = (0..n).map(|i| (i, rng.random(), rng.random())).collect();
        group.bench_function(format!("{n}_points"), |b| b.iter(|| Triangulation::build(black_box(&points)).unwrap()));
    }
    group.finish();
}

fn sampler_step(c: &mut Criterion) {
    let problem = PdeProblem::new(Benchmark::Burgers);
    let colloc = Collocation::generate(&problem, 10_000, 100, 100, 0).unwrap();
    let points = colloc.residual.points.clone();
    let d = problem.domain;
    let positions: Vec<(f64, f64)> = points.iter().map(|&(t, x)| d.normalize(t, x)).collect();
    let net = MlpParams::init(3, 32, 1, 0).unwrap();
    let config = DmisConfig { mesh_size: 500, gamma: 0.4, beta: 1.5 };
    let state = SamplerState::init(positions, config, &CORNER_IDS, 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    c.bench_function("sampler_step_10000_points", |b| {
        b.iter_batched(
            || state.clone(),
            |mut s| s.step(&net, &problem, &points, 512, &mut rng).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = jets, mesh_build, sampler_step
}
criterion_main!(benches);
