// SPDX-License-Identifier: Apache-2.0

mod common;

use common::*;
use dmis_core::ad::{self, Tape};
use dmis_core::pde::{Benchmark, PdeProblem};
use dmis_core::MlpParams;
use rand::Rng;

fn sample_point(r: &mut impl Rng) -> (f64, f64) {
    (r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
}

#[test]
fn jets_match_five_point_differences() {
    let mut r = rng(2024);
    for seed in 0..100u64 {
        let out_dim = 1 + (seed % 2) as usize;
        let net = random_net(seed, out_dim);
        for _ in 0..10 {
            let (t, x) = sample_point(&mut r);
            let jet = ad::eval_jet(&net, t, x, 3).unwrap();
            for k in 0..out_dim {
                let fd = fd_derivatives(&net, t, x, k, 1e-3);
                let got = [jet.u_t[k], jet.u_x[k], jet.u_xx[k], jet.u_xxx[k]];
                let tol = [1e-4, 1e-4, 1e-4, 1e-3];
                for o in 0..4 {
                    assert!(
                        (got[o] - fd[o]).abs() <= tol[o] * (1.0 + fd[o].abs()),
                        "seed {seed} ({t},{x}) channel {o}: jet {} fd {}",
                        got[o],
                        fd[o]
                    );
                }
            }
        }
    }
}

#[test]
fn burgers_residual_gradient_matches_differences() {
    let burgers = PdeProblem::new(Benchmark::Burgers);
    let mut r = rng(77);
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let net = random_net(seed, 1);
        for _ in 0..10 {
            let (t, x) = sample_point(&mut r);
            let tape = Tape::new(&net);
            let jet = tape.eval_jet(t, x, 2).unwrap();
            let loss = burgers.residual_loss(&jet).unwrap();
            let g = tape.gradient(loss).unwrap();
            let fd = fd_param_gradient(&net, |p| residual_value(&burgers, p, t, x));
            worst = worst.max(worst_relative(&g, &fd));
        }
    }
    assert!(worst <= 1e-5, "worst relative error {worst:e}");
}

#[test]
fn every_benchmark_residual_is_differentiable() {
    let mut r = rng(5);
    for b in Benchmark::ALL {
        let problem = PdeProblem::new(b);
        for seed in 0..5u64 {
            let net = random_net(seed + 100, problem.out_dim);
            let (t, x) = sample_point(&mut r);
            let tape = Tape::new(&net);
            let jet = tape.eval_jet(t, x, problem.residual_order()).unwrap();
            let loss = problem.residual_loss(&jet).unwrap();
            assert!(loss.value() >= 0.0);
            let g = tape.gradient(loss).unwrap();
            let fd = fd_param_gradient(&net, |p| residual_value(&problem, p, t, x));
            let err = worst_relative(&g, &fd);
            assert!(err <= 1e-5, "{b}: {err:e}");
        }
    }
}

#[test]
fn batched_recording_matches_per_point_recording() {
    let net = random_net(3, 2);
    let problem = PdeProblem::new(Benchmark::Schrodinger);
    let pts = [(0.1, 0.2), (0.4, -0.3), (0.0, 0.9)];

    let batched = Tape::new(&net);
    let jets = batched.eval_jets(&pts, 2).unwrap();
    let terms: Vec<_> = jets.iter().map(|j| problem.residual_loss(j).unwrap()).collect();
    let g_batch = batched.gradient(batched.sum(terms)).unwrap();

    let single = Tape::new(&net);
    let terms: Vec<_> = pts
        .iter()
        .map(|&(t, x)| problem.residual_loss(&single.eval_jet(t, x, 2).unwrap()).unwrap())
        .collect();
    let g_single = single.gradient(single.sum(terms)).unwrap();
    for (a, b) in g_batch.iter().zip(&g_single) {
        assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    }
}

#[test]
fn jets_and_gradients_are_bitwise_deterministic() {
    let net = MlpParams::init(3, 16, 1, 11).unwrap();
    let problem = PdeProblem::new(Benchmark::Kdv);
    let run = || {
        let tape = Tape::new(&net);
        let jet = tape.eval_jet(0.3, -0.4, 3).unwrap();
        let loss = problem.residual_loss(&jet).unwrap();
        let g = tape.gradient(loss).unwrap();
        let again = tape.gradient(loss).unwrap();
        assert_eq!(g, again);
        (jet.u_xxx[0].value().to_bits(), g.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
    };
    assert_eq!(run(), run());
}
