// SPDX-License-Identifier: Apache-2.0

//! Penalized PINN objective, Adam, and the training loop.

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ad::{self, Jet, Real, Tape, Var};
use crate::error::{Error, Result};
use crate::mlp::MlpParams;
use crate::pde::{Benchmark, BoundaryKind, Collocation, PdeProblem, CORNER_IDS};
use crate::sampler::{self, DmisConfig, RebuildEvent, SamplerState, WeightedBatch};

/// Iterations between full-batch loss evaluations.
pub const RECOMPUTE_EVERY: u64 = 100;

/// Consecutive aborted iterations tolerated before giving up.
pub const MAX_ABORTS: u32 = 10;

const BATCH_STREAM: u64 = 10;
const SAMPLER_SEED_SALT: u64 = 0x5eed_d315;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplerKind {
    Dmis(DmisConfig),
    Uniform,
}

impl SamplerKind {
    pub fn name(&self) -> &'static str {
        match self {
            SamplerKind::Dmis(_) => "dmis",
            SamplerKind::Uniform => "uniform",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub benchmark: Benchmark,
    pub depth: usize,
    pub width: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub lambda_i: f64,
    pub lambda_b: f64,
    pub n_f: usize,
    pub n_i: usize,
    pub n_b: usize,
    pub batch_f: usize,
    pub batch_i: usize,
    pub batch_b: usize,
    pub max_iters: u64,
    pub seed: u64,
    pub sampler: SamplerKind,
}

impl TrainConfig {
    /// Per-benchmark defaults (network, learning rate, DMIS and dataset sizes).
    pub fn defaults(benchmark: Benchmark) -> Self {
        let (depth, width, lr, beta, n_f, n_i, n_b) = match benchmark {
            Benchmark::Schrodinger => (4, 64, 0.001, 2.0, 60000, 200, 200),
            Benchmark::Burgers => (3, 32, 0.005, 1.5, 100000, 2000, 2000),
            Benchmark::Kdv => (4, 64, 0.001, 2.0, 60000, 2000, 2000),
            Benchmark::Diffusion => (4, 32, 0.002, 2.0, 100000, 2000, 2000),
            Benchmark::AllenCahn => (5, 64, 0.001, 1.5, 60000, 2000, 2000),
        };
        TrainConfig {
            benchmark,
            depth,
            width,
            learning_rate: lr,
            adam: AdamConfig::default(),
            lambda_i: 1.0,
            lambda_b: 1.0,
            n_f,
            n_i,
            n_b,
            batch_f: 512,
            batch_i: 128,
            batch_b: 128,
            max_iters: 10000,
            seed: 0,
            sampler: SamplerKind::Dmis(DmisConfig { mesh_size: 1000, gamma: 0.4, beta }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad(format!("learning rate must be > 0, got {}", self.learning_rate));
        }
        if !(self.lambda_i >= 0.0 && self.lambda_b >= 0.0) {
            return bad(format!("loss weights must be >= 0, got {} and {}", self.lambda_i, self.lambda_b));
        }
        let AdamConfig { beta1, beta2, eps } = self.adam;
        if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) {
            return bad(format!("invalid Adam parameters ({beta1}, {beta2}, {eps})"));
        }
        for (name, batch, n) in [
            ("residual", self.batch_f, self.n_f),
            ("initial", self.batch_i, self.n_i),
            ("boundary", self.batch_b, self.n_b),
        ] {
            if batch == 0 || batch > n {
                return bad(format!("{name} batch size {batch} must lie in 1..={n}"));
            }
        }
        if let SamplerKind::Dmis(cfg) = self.sampler {
            cfg.validate()?;
            if cfg.mesh_size > self.n_f {
                return bad(format!("mesh size {} exceeds n_f = {}", cfg.mesh_size, self.n_f));
            }
        }
        if self.depth == 0 || self.width == 0 {
            return bad("network depth and width must be >= 1".into());
        }
        Ok(())
    }
}

/// Loss components of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub f: f64,
    pub i: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainRecord {
    /// Number of parameter updates attempted so far (1-based).
    pub iter: u64,
    /// Most recent full-batch loss (refreshed every [`RECOMPUTE_EVERY`]).
    pub full: LossBreakdown,
    /// Mini-batch objective of this iteration.
    pub batch_loss: f64,
    pub ms: f64,
    pub rebuild: bool,
    pub aborted: bool,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: MlpParams,
    pub records: Vec<TrainRecord>,
    /// Full-batch loss of the initial network.
    pub initial: LossBreakdown,
    pub rebuilds: Vec<RebuildEvent>,
}

impl TrainOutcome {
    /// Full-batch loss after the last iteration.
    pub fn final_loss(&self) -> LossBreakdown {
        self.records.last().map_or(self.initial, |r| r.full)
    }
}

/// Recorded loss terms.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms<'t> {
    pub total: Var<'t>,
    pub f: Var<'t>,
    pub i: Var<'t>,
    pub b: Var<'t>,
}

/// `(1/M) Σ α′_k ℓ_k`.
pub fn weighted_mean<S: Real>(alpha: &[f64], losses: &[S]) -> Result<S> {
    if losses.is_empty() || alpha.len() != losses.len() {
        return Err(Error::Contract(format!(
            "{} weights for {} losses",
            alpha.len(),
            losses.len()
        )));
    }
    let mut acc = losses[0] * alpha[0];
    for (l, a) in losses.iter().zip(alpha).skip(1) {
        acc = acc + *l * *a;
    }
    Ok(acc * (1.0 / losses.len() as f64))
}

fn mean<S: Real>(losses: &[S]) -> Result<S> {
    weighted_mean(&vec![1.0; losses.len()], losses)
}

/// Points at which the boundary term is evaluated. Periodic problems pair
/// each boundary time with both spatial ends.
fn boundary_points(problem: &PdeProblem, pts: &[(f64, f64)]) -> Vec<(f64, f64)> {
    match problem.boundary {
        BoundaryKind::Dirichlet(_) => pts.to_vec(),
        BoundaryKind::Periodic => pts
            .iter()
            .flat_map(|&(t, _)| [(t, problem.domain.x_min), (t, problem.domain.x_max)])
            .collect(),
    }
}

fn boundary_losses<S: Real>(problem: &PdeProblem, jets: &[Jet<S>]) -> Vec<S> {
    match problem.boundary {
        BoundaryKind::Dirichlet(_) => jets.iter().map(|j| problem.dirichlet_loss(j)).collect(),
        BoundaryKind::Periodic => jets.chunks(2).map(|p| problem.periodic_loss(&p[0], &p[1])).collect(),
    }
}

/// Records `L = L_f + λ_i L_i + λ_b L_b` for one set of batches on `tape`.
///
/// `f_points` are the residual points of `batch_f` in batch order; `i_points`
/// and `b_points` are the initial and boundary batch points.
#[allow(clippy::too_many_arguments)]
pub fn assemble_loss<'t>(
    tape: &'t Tape<'t>,
    problem: &PdeProblem,
    batch_f: &WeightedBatch,
    f_points: &[(f64, f64)],
    i_points: &[(f64, f64)],
    b_points: &[(f64, f64)],
    lambda_i: f64,
    lambda_b: f64,
) -> Result<LossTerms<'t>> {
    if f_points.is_empty() || i_points.is_empty() || b_points.is_empty() || f_points.len() != batch_f.len() {
        return Err(Error::Contract("loss batches must be nonempty and consistent".into()));
    }
    let jets = tape.eval_jets(f_points, problem.residual_order())?;
    let residuals = jets.iter().map(|j| problem.residual_loss(j)).collect::<Result<Vec<_>>>()?;
    let f = weighted_mean(&batch_f.alpha_prime, &residuals)?;

    let jets = tape.eval_jets(i_points, 0)?;
    let i = mean(&jets.iter().map(|j| problem.initial_loss(j)).collect::<Vec<_>>())?;

    let jets = tape.eval_jets(&boundary_points(problem, b_points), problem.boundary_order())?;
    let b = mean(&boundary_losses(problem, &jets))?;

    let total = f + i * lambda_i + b * lambda_b;
    for (name, v) in [("L_f", f), ("L_i", i), ("L_b", b)] {
        if !v.value().is_finite() {
            return Err(Error::NonFinite(format!("{name} = {}", v.value())));
        }
    }
    Ok(LossTerms { total, f, i, b })
}

/// Unweighted loss over the complete datasets.
pub fn full_batch_loss(
    net: &MlpParams,
    problem: &PdeProblem,
    colloc: &Collocation,
    lambda_i: f64,
    lambda_b: f64,
) -> Result<LossBreakdown> {
    let residual = sampler::residual_losses(net, problem, &colloc.residual.points)?;
    let f = residual.iter().sum::<f64>() / residual.len() as f64;
    let jets = ad::eval_jets(net, &colloc.initial.points, 0)?;
    let i = jets.iter().map(|j| problem.initial_loss(j)).sum::<f64>() / jets.len() as f64;
    let jets = ad::eval_jets(
        net,
        &boundary_points(problem, &colloc.boundary.points),
        problem.boundary_order(),
    )?;
    let b_losses = boundary_losses(problem, &jets);
    let b = b_losses.iter().sum::<f64>() / b_losses.len() as f64;
    Ok(LossBreakdown { total: f + lambda_i * i + lambda_b * b, f, i, b })
}

/// Adam moments and step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { m: vec![0.0; n], v: vec![0.0; n], step: 0 }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], state: &mut AdamState, grads: &[f64], lr: f64, cfg: AdamConfig) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Contract(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient component {i}")));
    }
    state.step += 1;
    let step = i32::try_from(state.step).unwrap_or(i32::MAX);
    let c1 = 1.0 - cfg.beta1.powi(step);
    let c2 = 1.0 - cfg.beta2.powi(step);
    for k in 0..params.len() {
        let g = grads[k];
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[k] / c1;
        let v_hat = state.v[k] / c2;
        params[k] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Callbacks during [`train_with`].
pub trait Observer {
    fn on_record(&mut self, _record: &TrainRecord, _net: &MlpParams) -> Result<()> {
        Ok(())
    }

    fn on_rebuild(&mut self, _event: &RebuildEvent) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {}

pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(config, &mut ())
}

fn sampler_positions(problem: &PdeProblem, colloc: &Collocation) -> Vec<(f64, f64)> {
    let d = problem.domain;
    colloc.residual.points.iter().map(|&(t, x)| d.normalize(t, x)).collect()
}

/// Runs `config.max_iters` iterations, reporting each record to `observer`.
pub fn train_with(config: &TrainConfig, observer: &mut dyn Observer) -> Result<TrainOutcome> {
    config.validate()?;
    let start = Instant::now();
    let problem = PdeProblem::new(config.benchmark);
    let colloc = Collocation::generate(&problem, config.n_f, config.n_i, config.n_b, config.seed)?;
    let mut net = MlpParams::init(config.depth, config.width, problem.out_dim, config.seed)?;
    let mut adam = AdamState::new(net.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(BATCH_STREAM);

    let mut dmis = match config.sampler {
        SamplerKind::Dmis(cfg) => Some(SamplerState::init(
            sampler_positions(&problem, &colloc),
            cfg,
            &CORNER_IDS,
            config.seed ^ SAMPLER_SEED_SALT,
        )?),
        SamplerKind::Uniform => None,
    };

    let (li, lb) = (config.lambda_i, config.lambda_b);
    let initial = full_batch_loss(&net, &problem, &colloc, li, lb)?;
    let mut full = initial;
    let mut records = Vec::with_capacity(config.max_iters as usize);
    let mut aborts = 0u32;

    for iter in 1..=config.max_iters {
        let attempt = (|| -> Result<(f64, bool)> {
            let (batch_f, rebuilt) = match dmis.as_mut() {
                Some(state) => {
                    let out = state.step(&net, &problem, &colloc.residual.points, config.batch_f, &mut rng)?;
                    if out.rebuilt {
                        observer.on_rebuild(state.rebuilds().last().expect("rebuild logged"))?;
                    }
                    (out.batch, out.rebuilt)
                }
                None => (sampler::uniform_step(config.n_f, config.batch_f, &mut rng), false),
            };
            let i_ids: Vec<usize> = (0..config.batch_i).map(|_| rng.random_range(0..config.n_i)).collect();
            let b_ids: Vec<usize> = (0..config.batch_b).map(|_| rng.random_range(0..config.n_b)).collect();

            let tape = Tape::new(&net);
            let terms = assemble_loss(
                &tape,
                &problem,
                &batch_f,
                &colloc.residual.select(&batch_f.ids),
                &colloc.initial.select(&i_ids),
                &colloc.boundary.select(&b_ids),
                li,
                lb,
            )?;
            let grads = tape.gradient(terms.total)?;
            let loss = terms.total.value();
            drop(tape);
            adam_step(net.as_mut_slice(), &mut adam, &grads, config.learning_rate, config.adam)?;
            Ok((loss, rebuilt))
        })();

        let (batch_loss, rebuild, aborted) = match attempt {
            Ok((loss, rebuilt)) => {
                aborts = 0;
                (loss, rebuilt, false)
            }
            Err(Error::NonFinite(msg)) => {
                aborts += 1;
                if aborts > MAX_ABORTS {
                    return Err(Error::Divergence(format!(
                        "{aborts} consecutive aborted iterations, last at {iter}: {msg}"
                    )));
                }
                (f64::NAN, false, true)
            }
            Err(e) => return Err(e),
        };

        if iter % RECOMPUTE_EVERY == 0 || iter == config.max_iters {
            full = full_batch_loss(&net, &problem, &colloc, li, lb)?;
        }
        let record = TrainRecord {
            iter,
            full,
            batch_loss,
            ms: start.elapsed().as_secs_f64() * 1e3,
            rebuild,
            aborted,
        };
        observer.on_record(&record, &net)?;
        records.push(record);
    }

    Ok(TrainOutcome {
        params: net,
        records,
        initial,
        rebuilds: dmis.map(|s| s.rebuilds().to_vec()).unwrap_or_default(),
    })
}

/// Training log header.
pub const LOG_HEADER: &str = "iter,L,L_f,L_i,L_b,ms,rebuild";

/// One training log row (without the newline).
pub fn log_row(r: &TrainRecord) -> String {
    format!(
        "{},{},{},{},{},{:.3},{}",
        r.iter,
        r.full.total,
        r.full.f,
        r.full.i,
        r.full.b,
        r.ms,
        u8::from(r.rebuild)
    )
}

pub fn write_log_csv<W: Write>(records: &[TrainRecord], mut w: W) -> Result<()> {
    writeln!(w, "{LOG_HEADER}")?;
    for r in records {
        writeln!(w, "{}", log_row(r))?;
    }
    Ok(())
}

/// Parses a training log back into `(iter, L, ms)` triples.
pub fn read_log_csv(text: &str) -> Result<Vec<(u64, f64, f64)>> {
    let mut lines = text.lines();
    if lines.next() != Some(LOG_HEADER) {
        return Err(Error::Format("training log header mismatch".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Format(format!("bad training log row {line:?}"));
            if f.len() != 7 {
                return Err(bad());
            }
            Ok((
                f[0].parse().map_err(|_| bad())?,
                f[1].parse().map_err(|_| bad())?,
                f[5].parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}
