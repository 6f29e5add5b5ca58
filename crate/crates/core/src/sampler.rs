// SPDX-License-Identifier: Apache-2.0

//! Loss-proportional mini-batch sampling with mesh-interpolated losses, and
//! the uniform baseline sampler.

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ad;
use crate::error::{Error, Result};
use crate::mesh::{Point, Stencil, Triangulation};
use crate::mlp::MlpParams;
use crate::pde::PdeProblem;

/// Points per forward pass when evaluating residual losses in bulk.
const LOSS_CHUNK: usize = 1024;

const NOT_IN_S: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DmisConfig {
    /// Number of mesh points drawn from the residual set (corners come on top).
    pub mesh_size: usize,
    /// Rebuild threshold on the cosine similarity.
    pub gamma: f64,
    /// Weight sharpening exponent.
    pub beta: f64,
}

impl DmisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.mesh_size < 3 {
            return Err(Error::Config(format!("mesh size must be >= 3, got {}", self.mesh_size)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config(format!("gamma must lie in (0, 1), got {}", self.gamma)));
        }
        check_beta(self.beta)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta >= 1.0) || !beta.is_finite() {
        return Err(Error::Config(format!("beta must be >= 1, got {beta}")));
    }
    Ok(())
}

/// Sampled residual ids (with replacement) and their weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedBatch {
    pub ids: Vec<usize>,
    pub alpha_prime: Vec<f64>,
}

impl WeightedBatch {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RebuildEvent {
    pub iter: u64,
    /// `None` when the similarity was undefined (a zero weight vector).
    pub sim: Option<f64>,
    pub size: usize,
}

/// What one sampler step produced.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub batch: WeightedBatch,
    pub sim: Option<f64>,
    pub rebuilt: bool,
}

/// `q_i = ℓ_i / Σ ℓ`; uniform when every loss is zero.
pub fn compute_probs(losses: &[f64]) -> Result<Vec<f64>> {
    if losses.is_empty() {
        return Err(Error::Contract("no losses to normalize".into()));
    }
    if let Some((i, l)) = losses.iter().enumerate().find(|(_, l)| !(**l >= 0.0) || !l.is_finite()) {
        return Err(Error::Contract(format!("loss {i} is {l}, expected finite and >= 0")));
    }
    let n = losses.len();
    let mut sum: f64 = losses.iter().sum();
    let mut scale = 1.0;
    if !sum.is_finite() {
        scale = losses.iter().cloned().fold(0.0, f64::max);
        sum = losses.iter().map(|l| l / scale).sum();
    }
    if sum == 0.0 || !sum.is_normal() {
        return Ok(vec![1.0 / n as f64; n]);
    }
    Ok(losses.iter().map(|l| (l / scale) / sum).collect())
}

/// `α′_i = (1 / (n q_i))^β`, and 0 where `q_i = 0`.
pub fn sample_weights(q: &[f64], n_f: usize, beta: f64) -> Result<Vec<f64>> {
    check_beta(beta)?;
    let n = n_f as f64;
    Ok(q.iter()
        .map(|&qi| if qi > 0.0 { (1.0 / (n * qi)).powf(beta) } else { 0.0 })
        .collect())
}

/// Cosine of the angle between `v0` and `v`; `None` when either is zero.
pub fn cosine_similarity(v0: &[f64], v: &[f64]) -> Result<Option<f64>> {
    if v0.len() != v.len() {
        return Err(Error::Contract(format!("vector lengths differ: {} vs {}", v0.len(), v.len())));
    }
    // Rescale to keep the dot products finite for very large weights.
    let m0 = v0.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m0 == 0.0 || m == 0.0 || !m0.is_finite() || !m.is_finite() {
        return Ok(None);
    }
    let (mut dot, mut n0, mut n1) = (0.0, 0.0, 0.0);
    for (a, b) in v0.iter().zip(v) {
        let (a, b) = (a / m0, b / m);
        dot += a * b;
        n0 += a * a;
        n1 += b * b;
    }
    Ok(Some((dot / (n0.sqrt() * n1.sqrt())).clamp(-1.0, 1.0)))
}

/// Selection probabilities `g ∝ |q_now − q_t0|`, uniform if they coincide.
pub fn selection_probs(q_now: &[f64], q_t0: &[f64]) -> Result<Vec<f64>> {
    if q_now.len() != q_t0.len() {
        return Err(Error::Contract(format!(
            "vector lengths differ: {} vs {}",
            q_now.len(),
            q_t0.len()
        )));
    }
    let diffs: Vec<f64> = q_now.iter().zip(q_t0).map(|(a, b)| (a - b).abs()).collect();
    compute_probs(&diffs)
}

/// Draws `size` distinct ids by `g ∝ |q_now − q_t0|`, then appends the
/// corners. The result is sorted and free of duplicates.
pub fn select_mesh_points(
    q_now: &[f64],
    q_t0: &[f64],
    size: usize,
    corner_ids: &[usize],
    seed: u64,
) -> Result<Vec<usize>> {
    let g = selection_probs(q_now, q_t0)?;
    let n = g.len();
    if size > n {
        return Err(Error::Config(format!("mesh size {size} exceeds {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = index::sample_weighted(&mut rng, n, |i| g[i], size)
        .map_err(|e| Error::Contract(format!("selection weights: {e}")))?
        .into_vec();
    if chosen.len() < size {
        // Too few nonzero weights: fill up uniformly from the rest.
        let mut taken = vec![false; n];
        chosen.iter().for_each(|&i| taken[i] = true);
        let rest: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
        let extra = index::sample(&mut rng, rest.len(), size - chosen.len());
        chosen.extend(extra.iter().map(|k| rest[k]));
    }
    Ok(with_corners(chosen, corner_ids))
}

fn uniform_subset(n: usize, size: usize, corner_ids: &[usize], rng: &mut impl Rng) -> Vec<usize> {
    with_corners(index::sample(rng, n, size).into_vec(), corner_ids)
}

fn with_corners(mut ids: Vec<usize>, corner_ids: &[usize]) -> Vec<usize> {
    ids.extend_from_slice(corner_ids);
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Uniform ids with replacement and unit weights.
pub fn uniform_step(n_f: usize, batch_size: usize, rng: &mut impl Rng) -> WeightedBatch {
    WeightedBatch {
        ids: (0..batch_size).map(|_| rng.random_range(0..n_f)).collect(),
        alpha_prime: vec![1.0; batch_size],
    }
}

/// Squared residuals of `net` at `points`, evaluated without recording.
pub fn residual_losses(net: &MlpParams, problem: &PdeProblem, points: &[(f64, f64)]) -> Result<Vec<f64>> {
    let order = problem.residual_order();
    let mut out = Vec::with_capacity(points.len());
    for chunk in points.chunks(LOSS_CHUNK) {
        for jet in ad::eval_jets(net, chunk, order)? {
            out.push(problem.residual_loss(&jet)?);
        }
    }
    Ok(out)
}

/// Sampling state over a residual set of `n_f` points.
#[derive(Debug, Clone)]
pub struct SamplerState {
    config: DmisConfig,
    seed: u64,
    corner_ids: Vec<usize>,
    /// Mesh coordinates of every residual point.
    positions: Vec<Point>,
    q: Vec<f64>,
    q_t0: Vec<f64>,
    s: Vec<usize>,
    /// Slot of each residual id inside `s`, or `NOT_IN_S`.
    slot: Vec<usize>,
    v_t0: Vec<f64>,
    mesh: Triangulation,
    stencils: Vec<Stencil>,
    losses: Vec<f64>,
    t: u64,
    t0: u64,
    rebuilds: Vec<RebuildEvent>,
}

impl SamplerState {
    /// Uniform `q`, a uniformly drawn `S` plus corners, and the mesh over it.
    ///
    /// `positions` are the residual points in mesh coordinates, indexed by id.
    pub fn init(positions: Vec<Point>, config: DmisConfig, corner_ids: &[usize], seed: u64) -> Result<Self> {
        config.validate()?;
        let n = positions.len();
        if config.mesh_size > n {
            return Err(Error::Config(format!(
                "mesh size {} exceeds the {n} residual points",
                config.mesh_size
            )));
        }
        if let Some(c) = corner_ids.iter().find(|&&c| c >= n) {
            return Err(Error::Config(format!("corner id {c} out of range for {n} points")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = uniform_subset(n, config.mesh_size, corner_ids, &mut rng);
        let q = vec![1.0 / n as f64; n];
        let mut state = SamplerState {
            config,
            seed,
            corner_ids: corner_ids.to_vec(),
            mesh: Triangulation::build(&[(0, 0.0, 0.0), (1, 1.0, 0.0), (2, 0.0, 1.0)])?,
            positions,
            q_t0: q.clone(),
            q,
            s: Vec::new(),
            slot: vec![NOT_IN_S; n],
            v_t0: Vec::new(),
            stencils: Vec::new(),
            losses: vec![0.0; n],
            t: 0,
            t0: 0,
            rebuilds: Vec::new(),
        };
        state.install_mesh(s)?;
        state.v_t0 = state.weights_on_s()?;
        Ok(state)
    }

    pub fn config(&self) -> DmisConfig {
        self.config
    }

    pub fn n_f(&self) -> usize {
        self.positions.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn q_t0(&self) -> &[f64] {
        &self.q_t0
    }

    /// Mesh point ids, ascending.
    pub fn mesh_ids(&self) -> &[usize] {
        &self.s
    }

    pub fn v_t0(&self) -> &[f64] {
        &self.v_t0
    }

    pub fn mesh(&self) -> &Triangulation {
        &self.mesh
    }

    /// Combined exact and interpolated losses from the last step.
    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    pub fn iteration(&self) -> u64 {
        self.t
    }

    pub fn last_rebuild(&self) -> u64 {
        self.t0
    }

    pub fn rebuilds(&self) -> &[RebuildEvent] {
        &self.rebuilds
    }

    fn install_mesh(&mut self, s: Vec<usize>) -> Result<()> {
        let pts: Vec<(usize, f64, f64)> = s.iter().map(|&i| (i, self.positions[i].0, self.positions[i].1)).collect();
        let mesh = Triangulation::build(&pts)?;
        for &i in &self.s {
            self.slot[i] = NOT_IN_S;
        }
        for (k, &i) in s.iter().enumerate() {
            self.slot[i] = k;
        }
        self.stencils = self.positions.iter().map(|&p| mesh.stencil(p)).collect();
        self.mesh = mesh;
        self.s = s;
        Ok(())
    }

    fn weights_on_s(&self) -> Result<Vec<f64>> {
        let q_s: Vec<f64> = self.s.iter().map(|&i| self.q[i]).collect();
        sample_weights(&q_s, self.n_f(), self.config.beta)
    }

    /// One sampler step with the residual losses of `net`.
    pub fn step(
        &mut self,
        net: &MlpParams,
        problem: &PdeProblem,
        points: &[(f64, f64)],
        batch_size: usize,
        rng: &mut impl Rng,
    ) -> Result<StepOutcome> {
        if points.len() != self.n_f() {
            return Err(Error::Contract(format!(
                "{} residual points for a sampler over {}",
                points.len(),
                self.n_f()
            )));
        }
        self.step_with(
            |ids| {
                let pts: Vec<(f64, f64)> = ids.iter().map(|&i| points[i]).collect();
                residual_losses(net, problem, &pts)
            },
            batch_size,
            rng,
        )
    }

    /// One sampler step; `exact` returns the losses at the given mesh ids.
    pub fn step_with(
        &mut self,
        exact: impl FnOnce(&[usize]) -> Result<Vec<f64>>,
        batch_size: usize,
        rng: &mut impl Rng,
    ) -> Result<StepOutcome> {
        if batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        self.t += 1;
        let exact_losses = exact(&self.s)?;
        if exact_losses.len() != self.s.len() {
            return Err(Error::Contract(format!(
                "{} losses for {} mesh points",
                exact_losses.len(),
                self.s.len()
            )));
        }
        if let Some(l) = exact_losses.iter().find(|l| !l.is_finite()) {
            return Err(Error::NonFinite(format!("mesh-point loss {l}")));
        }

        let slot = &self.slot;
        self.mesh.set_values_by_id(|id| exact_losses[slot[id]]);
        let values = self.mesh.values();
        for (i, loss) in self.losses.iter_mut().enumerate() {
            *loss = match self.slot[i] {
                NOT_IN_S => self.stencils[i].apply(values).max(0.0),
                k => exact_losses[k],
            };
        }
        self.q = compute_probs(&self.losses)?;

        let dist = WeightedIndex::new(&self.q).map_err(|e| Error::Contract(format!("sampling weights: {e}")))?;
        let ids: Vec<usize> = (0..batch_size).map(|_| dist.sample(rng)).collect();
        let n = self.n_f() as f64;
        let beta = self.config.beta;
        let alpha_prime = ids.iter().map(|&i| (1.0 / (n * self.q[i])).powf(beta)).collect();

        let v = self.weights_on_s()?;
        let sim = cosine_similarity(&self.v_t0, &v)?;
        let rebuilt = sim.is_none_or(|s| s < self.config.gamma);
        if rebuilt {
            self.rebuild(sim)?;
        }
        Ok(StepOutcome {
            batch: WeightedBatch { ids, alpha_prime },
            sim,
            rebuilt,
        })
    }

    fn rebuild(&mut self, sim: Option<f64>) -> Result<()> {
        let seed = self.seed ^ self.t.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let s = select_mesh_points(&self.q, &self.q_t0, self.config.mesh_size, &self.corner_ids, seed)?;
        if let Err(first) = self.install_mesh(s) {
            if !matches!(first, Error::DegenerateGeometry(_)) {
                return Err(first);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
            let s = uniform_subset(self.n_f(), self.config.mesh_size, &self.corner_ids, &mut rng);
            self.install_mesh(s)?;
        }
        self.q_t0.clone_from(&self.q);
        self.v_t0 = self.weights_on_s()?;
        self.t0 = self.t;
        self.rebuilds.push(RebuildEvent {
            iter: self.t,
            sim,
            size: self.s.len(),
        });
        Ok(())
    }
}

/// CSV of rebuild events: header `event,iter,sim,size`, rows `rebuild,…`.
pub fn write_rebuilds_csv<W: Write>(events: &[RebuildEvent], mut w: W) -> Result<()> {
    writeln!(w, "event,iter,sim,size")?;
    for e in events {
        let sim = e.sim.map_or_else(|| "nan".to_string(), |s| s.to_string());
        writeln!(w, "rebuild,{},{},{}", e.iter, sim, e.size)?;
    }
    Ok(())
}
