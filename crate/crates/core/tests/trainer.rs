// SPDX-License-Identifier: Apache-2.0

mod common;

use common::*;
use dmis_core::ad::{self, Tape};
use dmis_core::pde::{Benchmark, BoundaryKind, PdeProblem};
use dmis_core::sampler::{DmisConfig, WeightedBatch};
use dmis_core::trainer::*;
use dmis_core::{Error, MlpParams};

fn small(benchmark: Benchmark, sampler: SamplerKind) -> TrainConfig {
    TrainConfig {
        n_f: 2000,
        n_i: 200,
        n_b: 200,
        depth: 2,
        width: 16,
        max_iters: 40,
        seed: 3,
        sampler,
        ..TrainConfig::defaults(benchmark)
    }
}

const DMIS: SamplerKind = SamplerKind::Dmis(DmisConfig { mesh_size: 100, gamma: 0.4, beta: 1.5 });

/// The same objective as `assemble_loss`, evaluated point by point in f64.
fn direct_loss(
    problem: &PdeProblem,
    net: &MlpParams,
    f: &[(f64, f64)],
    alpha: &[f64],
    i: &[(f64, f64)],
    b: &[(f64, f64)],
) -> f64 {
    let lf: f64 = f
        .iter()
        .zip(alpha)
        .map(|(&(t, x), a)| a * residual_value(problem, net, t, x))
        .sum::<f64>()
        / f.len() as f64;
    let li: f64 = i
        .iter()
        .map(|&(_, x)| {
            let u = net.forward(0.0, x).unwrap();
            let u0 = problem.initial.eval(x);
            (0..problem.out_dim).map(|k| (u[k] - u0[k]).powi(2)).sum::<f64>()
        })
        .sum::<f64>()
        / i.len() as f64;
    let lb: f64 = b
        .iter()
        .map(|&(t, x)| match problem.boundary {
            BoundaryKind::Dirichlet(g) => {
                let u = net.forward(t, x).unwrap();
                u.iter().map(|v| (v - g).powi(2)).sum::<f64>()
            }
            BoundaryKind::Periodic => {
                let l = ad::eval_jet(net, t, problem.domain.x_min, 1).unwrap();
                let r = ad::eval_jet(net, t, problem.domain.x_max, 1).unwrap();
                (0..problem.out_dim)
                    .map(|k| (l.u[k] - r.u[k]).powi(2) + (l.u_x[k] - r.u_x[k]).powi(2))
                    .sum::<f64>()
            }
        })
        .sum::<f64>()
        / b.len() as f64;
    lf + 0.7 * li + 1.3 * lb
}

#[test]
fn end_to_end_gradient_matches_differences() {
    for (k, bench) in [Benchmark::Burgers, Benchmark::Kdv, Benchmark::Schrodinger, Benchmark::Diffusion]
        .into_iter()
        .enumerate()
    {
        let problem = PdeProblem::new(bench);
        let net = MlpParams::init(2, 4, problem.out_dim, 40 + k as u64).unwrap();
        let d = problem.domain;
        let f = vec![(0.1, d.x_min + 0.3 * d.width()), (0.4, d.x_min + 0.55 * d.width()), (0.2, d.x_min + 0.9 * d.width())];
        let batch = WeightedBatch { ids: vec![0, 1, 2], alpha_prime: vec![2.0, 0.5, 1.25] };
        let i = vec![(0.0, d.x_min + 0.2 * d.width()), (0.0, d.x_min + 0.7 * d.width()), (0.0, d.x_max)];
        let b = vec![(0.3, d.x_min), (0.05, d.x_max), (0.45, d.x_min)];

        let tape = Tape::new(&net);
        let terms = assemble_loss(&tape, &problem, &batch, &f, &i, &b, 0.7, 1.3).unwrap();
        let direct = direct_loss(&problem, &net, &f, &batch.alpha_prime, &i, &b);
        assert!((terms.total.value() - direct).abs() <= 1e-12 * (1.0 + direct));
        let g = tape.gradient(terms.total).unwrap();
        let fd = fd_param_gradient(&net, |p| direct_loss(&problem, p, &f, &batch.alpha_prime, &i, &b));
        let worst = worst_relative(&g, &fd);
        assert!(worst <= 1e-5, "{bench}: worst relative error {worst}");
    }
}

#[test]
fn unit_weights_give_the_plain_mean() {
    let problem = PdeProblem::new(Benchmark::Burgers);
    let net = MlpParams::init(2, 6, 1, 1).unwrap();
    let f = vec![(0.1, 0.2), (0.3, -0.5), (0.05, 0.9), (0.4, 0.0)];
    let batch = WeightedBatch { ids: vec![0, 1, 2, 3], alpha_prime: vec![1.0; 4] };
    let tape = Tape::new(&net);
    let terms = assemble_loss(&tape, &problem, &batch, &f, &[(0.0, 0.1)], &[(0.2, 1.0)], 1.0, 1.0).unwrap();
    let mean = f.iter().map(|&(t, x)| residual_value(&problem, &net, t, x)).sum::<f64>() / 4.0;
    assert!((terms.f.value() - mean).abs() <= 1e-14);
}

#[test]
fn satisfied_initial_condition_has_zero_loss() {
    let problem = PdeProblem::new(Benchmark::Burgers);
    let net = MlpParams::zeros(2, 4, 1).unwrap();
    let batch = WeightedBatch { ids: vec![0], alpha_prime: vec![1.0] };
    let tape = Tape::new(&net);
    let terms =
        assemble_loss(&tape, &problem, &batch, &[(0.1, 0.1)], &[(0.0, 0.0), (0.0, 0.0)], &[(0.1, 1.0)], 1.0, 1.0)
            .unwrap();
    assert_eq!(terms.i.value(), 0.0);
    assert!(assemble_loss(&tape, &problem, &batch, &[(0.1, 0.1)], &[], &[(0.1, 1.0)], 1.0, 1.0).is_err());
}

#[test]
fn zero_iterations_return_the_initial_network() {
    let cfg = TrainConfig { max_iters: 0, ..small(Benchmark::Burgers, DMIS) };
    let out = train(&cfg).unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.params, MlpParams::init(2, 16, 1, 3).unwrap());
    assert_eq!(out.final_loss(), out.initial);
}

#[test]
fn uniform_smoke_run_reduces_the_loss() {
    let cfg = TrainConfig {
        n_f: 2000,
        max_iters: 500,
        seed: 1,
        sampler: SamplerKind::Uniform,
        ..TrainConfig::defaults(Benchmark::Burgers)
    };
    let out = train(&cfg).unwrap();
    assert_eq!(out.records.len(), 500);
    let last = out.final_loss().total;
    assert!(last < out.initial.total, "initial {} final {last}", out.initial.total);
    assert!(out.records.windows(2).all(|w| w[1].ms >= w[0].ms && w[1].iter == w[0].iter + 1));
    assert!(out.records.iter().all(|r| !r.rebuild && !r.aborted));
    // Piecewise constant between recomputes.
    assert_eq!(out.records[100].full, out.records[198].full);
    assert_ne!(out.records[98].full, out.records[99].full);
}

#[test]
fn training_is_bitwise_deterministic() {
    for sampler in [SamplerKind::Uniform, DMIS] {
        let cfg = small(Benchmark::Kdv, sampler);
        let a = train(&cfg).unwrap();
        let b = train(&cfg).unwrap();
        let bits = |p: &MlpParams| p.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.params), bits(&b.params));
        assert_eq!(a.rebuilds, b.rebuilds);
    }
}

#[test]
fn every_benchmark_trains_a_few_steps() {
    for bench in Benchmark::ALL {
        let out = train(&TrainConfig { max_iters: 5, ..small(bench, DMIS) }).unwrap();
        assert_eq!(out.records.len(), 5);
        assert!(out.final_loss().total.is_finite());
    }
}

#[test]
fn runaway_learning_rate_is_reported_as_divergence() {
    let cfg = TrainConfig { learning_rate: 1e300, ..small(Benchmark::Burgers, SamplerKind::Uniform) };
    assert!(matches!(train(&cfg), Err(Error::Divergence(_))));
}

#[test]
fn observer_sees_every_record() {
    struct Count(u64, usize);
    impl Observer for Count {
        fn on_record(&mut self, r: &TrainRecord, _: &MlpParams) -> dmis_core::Result<()> {
            assert_eq!(r.iter, self.0 + 1);
            self.0 = r.iter;
            Ok(())
        }
        fn on_rebuild(&mut self, _: &dmis_core::sampler::RebuildEvent) -> dmis_core::Result<()> {
            self.1 += 1;
            Ok(())
        }
    }
    let mut obs = Count(0, 0);
    let out = train_with(&small(Benchmark::Burgers, DMIS), &mut obs).unwrap();
    assert_eq!(obs.0, 40);
    assert_eq!(obs.1, out.rebuilds.len());
}

#[test]
fn invalid_configs_are_rejected() {
    let cfg = TrainConfig { batch_f: 0, ..small(Benchmark::Burgers, DMIS) };
    assert!(matches!(train(&cfg), Err(Error::Config(_))));
    let cfg = small(Benchmark::Burgers, SamplerKind::Dmis(DmisConfig { mesh_size: 5000, gamma: 0.4, beta: 1.5 }));
    assert!(matches!(train(&cfg), Err(Error::Config(_))));
}
