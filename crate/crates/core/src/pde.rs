// SPDX-License-Identifier: Apache-2.0

//! The benchmark problems: residual operators, initial and boundary
//! conditions, domains, and collocation sets.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ad::{self, Jet, Real};
use crate::error::{Error, Result};
use crate::mlp::MlpParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Benchmark {
    Schrodinger,
    Burgers,
    Kdv,
    Diffusion,
    AllenCahn,
}

impl Benchmark {
    pub const ALL: [Benchmark; 5] = [
        Benchmark::Schrodinger,
        Benchmark::Burgers,
        Benchmark::Kdv,
        Benchmark::Diffusion,
        Benchmark::AllenCahn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Benchmark::Schrodinger => "schrodinger",
            Benchmark::Burgers => "burgers",
            Benchmark::Kdv => "kdv",
            Benchmark::Diffusion => "diffusion",
            Benchmark::AllenCahn => "allen-cahn",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Benchmark {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown benchmark {s:?}")))
    }
}

/// Spatial bounds, final time, and the train/validation/test time split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub t_max: f64,
}

/// Time segment of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Segment {
    Train,
    Validation,
    Test,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::Train, Segment::Validation, Segment::Test];

    pub fn name(self) -> &'static str {
        match self {
            Segment::Train => "train",
            Segment::Validation => "val",
            Segment::Test => "test",
        }
    }
}

impl DomainSpec {
    pub fn new(x_min: f64, x_max: f64, t_max: f64) -> Result<Self> {
        if !(x_min < x_max) || !(t_max > 0.0) {
            return Err(Error::Config(format!(
                "invalid domain x∈[{x_min}, {x_max}], t∈[0, {t_max}]"
            )));
        }
        Ok(DomainSpec { x_min, x_max, t_max })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Training data lives in `[0, T/2]`.
    pub fn train_end(&self) -> f64 {
        0.5 * self.t_max
    }

    pub fn segment(&self, segment: Segment) -> (f64, f64) {
        match segment {
            Segment::Train => (0.0, 0.5 * self.t_max),
            Segment::Validation => (0.5 * self.t_max, 0.75 * self.t_max),
            Segment::Test => (0.75 * self.t_max, self.t_max),
        }
    }

    /// Maps a training-region point to the unit square.
    pub fn normalize(&self, t: f64, x: f64) -> (f64, f64) {
        (t / self.train_end(), (x - self.x_min) / self.width())
    }
}

/// Residual operator, written so that a zero residual means the PDE holds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Equation {
    /// `i h_t + 0.5 h_xx + |h|² h = 0` with `h = u + i v`.
    Schrodinger,
    /// `u_t + u u_x − ν u_xx = 0`.
    Burgers { viscosity: f64 },
    /// `u_t + u u_x + δ u_xxx = 0`.
    Kdv { dispersion: f64 },
    /// `u_t − c u_xx − f e^{−t} x = 0`.
    Diffusion { diffusivity: f64, forcing: f64 },
    /// `u_t − c u_xx − r sin(π u) = 0`.
    AllenCahn { diffusivity: f64, reaction: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialCondition {
    /// `−sin(πx)`
    NegSinPi,
    /// `cos(πx)`
    CosPi,
    /// `(2 sech x, 0)` for the real and imaginary parts.
    TwoSech,
    /// `2 sin(πx) + 2x − 2x³`
    SinPlusCubic,
    /// `x² cos(πx)`
    XSquaredCosPi,
    /// `sin(πx)`
    SinPi,
}

impl InitialCondition {
    /// Initial value per output component.
    pub fn eval(self, x: f64) -> [f64; 2] {
        match self {
            InitialCondition::NegSinPi => [-(PI * x).sin(), 0.0],
            InitialCondition::CosPi => [(PI * x).cos(), 0.0],
            InitialCondition::TwoSech => [2.0 / x.cosh(), 0.0],
            InitialCondition::SinPlusCubic => [2.0 * (PI * x).sin() + 2.0 * x - 2.0 * x * x * x, 0.0],
            InitialCondition::XSquaredCosPi => [x * x * (PI * x).cos(), 0.0],
            InitialCondition::SinPi => [(PI * x).sin(), 0.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryKind {
    /// Constant value `g` at both spatial ends.
    Dirichlet(f64),
    /// Value and first x-derivative match across the spatial boundary.
    Periodic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdeProblem {
    pub name: String,
    pub benchmark: Option<Benchmark>,
    pub equation: Equation,
    pub initial: InitialCondition,
    pub boundary: BoundaryKind,
    pub domain: DomainSpec,
    pub out_dim: usize,
}

impl PdeProblem {
    pub fn new(benchmark: Benchmark) -> Self {
        let domain = |x_min, x_max, t_max| DomainSpec { x_min, x_max, t_max };
        let (equation, initial, boundary, domain, out_dim) = match benchmark {
            Benchmark::Schrodinger => (
                Equation::Schrodinger,
                InitialCondition::TwoSech,
                BoundaryKind::Periodic,
                domain(-5.0, 5.0, PI / 2.0),
                2,
            ),
            Benchmark::Burgers => (
                Equation::Burgers { viscosity: 0.04 / PI },
                InitialCondition::NegSinPi,
                BoundaryKind::Dirichlet(0.0),
                domain(-1.0, 1.0, 1.0),
                1,
            ),
            Benchmark::Kdv => (
                Equation::Kdv { dispersion: 0.0025 },
                InitialCondition::CosPi,
                BoundaryKind::Periodic,
                domain(-1.0, 1.0, 1.0),
                1,
            ),
            Benchmark::Diffusion => (
                Equation::Diffusion { diffusivity: 1.2, forcing: 5.0 },
                InitialCondition::SinPlusCubic,
                BoundaryKind::Dirichlet(0.0),
                domain(0.0, 1.0, 1.0),
                1,
            ),
            Benchmark::AllenCahn => (
                Equation::AllenCahn { diffusivity: 0.001 / PI, reaction: 2.0 },
                InitialCondition::XSquaredCosPi,
                BoundaryKind::Periodic,
                domain(-1.0, 1.0, 1.0),
                1,
            ),
        };
        PdeProblem {
            name: benchmark.name().to_string(),
            benchmark: Some(benchmark),
            equation,
            initial,
            boundary,
            domain,
            out_dim,
        }
    }

    /// Heat equation `u_t = u_xx` on `[0, 1]` with `u0 = sin(πx)` and zero
    /// Dirichlet ends; exact solution `e^{−π² t} sin(πx)`.
    pub fn heat() -> Self {
        PdeProblem {
            name: "heat".into(),
            benchmark: None,
            equation: Equation::Diffusion { diffusivity: 1.0, forcing: 0.0 },
            initial: InitialCondition::SinPi,
            boundary: BoundaryKind::Dirichlet(0.0),
            domain: DomainSpec { x_min: 0.0, x_max: 1.0, t_max: 1.0 },
            out_dim: 1,
        }
    }

    /// Highest x-derivative the residual needs.
    pub fn residual_order(&self) -> usize {
        match self.equation {
            Equation::Kdv { .. } => 3,
            _ => 2,
        }
    }

    /// Highest x-derivative the boundary loss needs.
    pub fn boundary_order(&self) -> usize {
        match self.boundary {
            BoundaryKind::Periodic => 1,
            BoundaryKind::Dirichlet(_) => 0,
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self.boundary, BoundaryKind::Periodic)
    }

    /// Squared residual `ℓ_f` at one jet. The Schrödinger residual is split
    /// into real and imaginary parts and their squares summed.
    pub fn residual_loss<S: Real>(&self, jet: &Jet<S>) -> Result<S> {
        let need = self.residual_order();
        if jet.order < need || jet.out_dim() != self.out_dim {
            return Err(Error::Contract(format!(
                "{} residual needs order {need} with {} outputs, jet has order {} with {}",
                self.name,
                self.out_dim,
                jet.order,
                jet.out_dim()
            )));
        }
        let r = match self.equation {
            Equation::Schrodinger => {
                let (u, v) = (jet.u[0], jet.u[1]);
                let modulus = u * u + v * v;
                let re = jet.u_xx[0] * 0.5 - jet.u_t[1] + modulus * u;
                let im = jet.u_t[0] + jet.u_xx[1] * 0.5 + modulus * v;
                return Ok(re.square() + im.square());
            }
            Equation::Burgers { viscosity } => {
                jet.u_t[0] + jet.u[0] * jet.u_x[0] - jet.u_xx[0] * viscosity
            }
            Equation::Kdv { dispersion } => {
                jet.u_t[0] + jet.u[0] * jet.u_x[0] + jet.u_xxx[0] * dispersion
            }
            Equation::Diffusion { diffusivity, forcing } => {
                jet.u_t[0] - jet.u_xx[0] * diffusivity - forcing * (-jet.t).exp() * jet.x
            }
            Equation::AllenCahn { diffusivity, reaction } => {
                jet.u_t[0] - jet.u_xx[0] * diffusivity - (jet.u[0] * PI).sin() * reaction
            }
        };
        Ok(r.square())
    }

    /// `Σ_k (û_k − u0_k)²` at a point of the initial line.
    pub fn initial_loss<S: Real>(&self, jet: &Jet<S>) -> S {
        let target = self.initial.eval(jet.x);
        let mut loss = (jet.u[0] - target[0]).square();
        for k in 1..self.out_dim {
            loss = loss + (jet.u[k] - target[k]).square();
        }
        loss
    }

    /// Squared mismatch to the Dirichlet value.
    pub fn dirichlet_loss<S: Real>(&self, jet: &Jet<S>) -> S {
        let g = match self.boundary {
            BoundaryKind::Dirichlet(g) => g,
            BoundaryKind::Periodic => 0.0,
        };
        let mut loss = (jet.u[0] - g).square();
        for k in 1..self.out_dim {
            loss = loss + (jet.u[k] - g).square();
        }
        loss
    }

    /// `‖û(t,x_min) − û(t,x_max)‖² + ‖û_x(t,x_min) − û_x(t,x_max)‖²`.
    pub fn periodic_loss<S: Real>(&self, left: &Jet<S>, right: &Jet<S>) -> S {
        let mut loss = (left.u[0] - right.u[0]).square() + (left.u_x[0] - right.u_x[0]).square();
        for k in 1..self.out_dim {
            loss = loss + (left.u[k] - right.u[k]).square() + (left.u_x[k] - right.u_x[k]).square();
        }
        loss
    }

    /// Initial or boundary point loss of `net`, evaluated directly.
    pub fn ic_bc_loss(&self, net: &MlpParams, role: Role, t: f64, x: f64) -> Result<f64> {
        match role {
            Role::Initial => Ok(self.initial_loss(&ad::eval_jet(net, 0.0, x, 0)?)),
            Role::Boundary => match self.boundary {
                BoundaryKind::Dirichlet(_) => Ok(self.dirichlet_loss(&ad::eval_jet(net, t, x, 0)?)),
                BoundaryKind::Periodic => {
                    let jets = ad::eval_jets(
                        net,
                        &[(t, self.domain.x_min), (t, self.domain.x_max)],
                        1,
                    )?;
                    Ok(self.periodic_loss(&jets[0], &jets[1]))
                }
            },
            Role::Residual => Err(Error::Contract("ic_bc_loss called with a residual point".into())),
        }
    }
}

/// Which loss term a collocation set feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Residual,
    Initial,
    Boundary,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Residual => "residual",
            Role::Initial => "initial",
            Role::Boundary => "boundary",
        }
    }
}

/// Points of one role with ids `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    pub role: Role,
    /// `(t, x)` per id.
    pub points: Vec<(f64, f64)>,
}

impl CollocationSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn select(&self, ids: &[usize]) -> Vec<(f64, f64)> {
        ids.iter().map(|&i| self.points[i]).collect()
    }
}

/// The residual, initial, and boundary datasets of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Collocation {
    pub residual: CollocationSet,
    pub initial: CollocationSet,
    pub boundary: CollocationSet,
}

/// Ids of the four training-region corners inside the residual set.
pub const CORNER_IDS: [usize; 4] = [0, 1, 2, 3];

impl Collocation {
    /// Uniform draws over the training region (`t ∈ [0, T/2]`). The first
    /// four residual ids are the region's corners, so a mesh over any subset
    /// that includes them covers every residual point.
    pub fn generate(problem: &PdeProblem, n_f: usize, n_i: usize, n_b: usize, seed: u64) -> Result<Self> {
        if n_f < CORNER_IDS.len() || n_i == 0 || n_b == 0 {
            return Err(Error::Config(format!(
                "collocation sizes must be positive (n_f >= 4), got {n_f}, {n_i}, {n_b}"
            )));
        }
        let d = problem.domain;
        let t_end = d.train_end();
        let stream = |k: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k);
            rng
        };

        let mut rng = stream(0);
        let mut residual = vec![(0.0, d.x_min), (0.0, d.x_max), (t_end, d.x_min), (t_end, d.x_max)];
        residual.extend((CORNER_IDS.len()..n_f).map(|_| {
            let t = rng.random::<f64>() * t_end;
            let x = d.x_min + rng.random::<f64>() * d.width();
            (t, x)
        }));

        let mut rng = stream(1);
        let initial = (0..n_i).map(|_| (0.0, d.x_min + rng.random::<f64>() * d.width())).collect();

        let mut rng = stream(2);
        let boundary = (0..n_b)
            .map(|_| {
                let t = rng.random::<f64>() * t_end;
                let x = if rng.random::<bool>() { d.x_max } else { d.x_min };
                (t, x)
            })
            .collect();

        Ok(Collocation {
            residual: CollocationSet { role: Role::Residual, points: residual },
            initial: CollocationSet { role: Role::Initial, points: initial },
            boundary: CollocationSet { role: Role::Boundary, points: boundary },
        })
    }

    /// CSV `id,role,t,x` over all three sets.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "id,role,t,x")?;
        for set in [&self.residual, &self.initial, &self.boundary] {
            for (id, (t, x)) in set.points.iter().enumerate() {
                writeln!(w, "{id},{},{t},{x}", set.role.name())?;
            }
        }
        Ok(())
    }
}

/// Shorthand for [`PdeProblem::new`] from a name.
pub fn make_problem(name: &str) -> Result<PdeProblem> {
    Ok(PdeProblem::new(name.parse()?))
}
