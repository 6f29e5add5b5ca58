// SPDX-License-Identifier: Apache-2.0

//! Reference solutions on a uniform `(t, x)` grid by the method of lines:
//! central differences for Dirichlet problems, Fourier pseudospectral
//! derivatives for periodic ones, classical RK4 in time.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::pde::{BoundaryKind, Equation, PdeProblem};

const MAGIC: &str = "dmis-grid";
const VERSION: &str = "v1";

/// Solutions with `‖u‖∞` above this are reported as unstable.
pub const BLOW_UP: f64 = 1e6;

/// Largest relative spectral energy allowed above two thirds of the
/// Nyquist wavenumber before a periodic solve is declared under-resolved.
pub const SPECTRAL_TAIL_LIMIT: f64 = 1e-6;

pub const NX_RANGE: (usize, usize) = (4, 1 << 16);
pub const NT_RANGE: (usize, usize) = (2, 1 << 20);

/// Fraction of the RK4 stability interval used for the internal step.
const SAFETY: f64 = 0.5;
/// RK4 stability limits along the imaginary and negative real axes.
const RK4_IMAG: f64 = 2.828;
const RK4_REAL: f64 = 2.785;

/// Solution samples at `nt` uniform times in `[0, T]` and `nx + 1` uniform
/// nodes in `[x_min, x_max]` (periodic grids repeat the first node at the end).
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionGrid {
    pub name: String,
    pub nx: usize,
    pub nt: usize,
    pub t_max: f64,
    pub x_min: f64,
    pub x_max: f64,
    /// Row-major `nt × (nx + 1)`; the modulus for complex problems.
    pub values: Vec<f64>,
    /// Real and imaginary planes of complex problems.
    pub planes: Option<(Vec<f64>, Vec<f64>)>,
}

impl SolutionGrid {
    pub fn cols(&self) -> usize {
        self.nx + 1
    }

    pub fn t(&self, n: usize) -> f64 {
        if n + 1 == self.nt {
            self.t_max
        } else {
            self.t_max * n as f64 / (self.nt - 1) as f64
        }
    }

    pub fn x(&self, j: usize) -> f64 {
        if j == self.nx {
            self.x_max
        } else {
            self.x_min + (self.x_max - self.x_min) * j as f64 / self.nx as f64
        }
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.cols()..(n + 1) * self.cols()]
    }

    pub fn value(&self, n: usize, j: usize) -> f64 {
        self.values[n * self.cols() + j]
    }

    /// Bilinear interpolation of the stored field.
    pub fn sample(&self, t: f64, x: f64) -> Result<f64> {
        if !(0.0..=self.t_max).contains(&t) || !(self.x_min..=self.x_max).contains(&x) {
            return Err(Error::OutOfRange { t, x });
        }
        let locate = |s: f64, cells: usize| -> (usize, f64) {
            let pos = s * cells as f64;
            let i = (pos.floor() as usize).min(cells - 1);
            (i, pos - i as f64)
        };
        let (n, ft) = locate(t / self.t_max, self.nt - 1);
        let (j, fx) = locate((x - self.x_min) / (self.x_max - self.x_min), self.nx);
        let v = |a: usize, b: usize| self.value(a, b);
        if ft == 0.0 && fx == 0.0 {
            return Ok(v(n, j));
        }
        let lower = (1.0 - fx) * v(n, j) + fx * v(n, j + 1);
        let upper = (1.0 - fx) * v(n + 1, j) + fx * v(n + 1, j + 1);
        Ok((1.0 - ft) * lower + ft * upper)
    }

    /// Header line plus little-endian `f64` planes (field, then real and
    /// imaginary parts when present).
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{MAGIC} {VERSION} {} {} {} {:?} {:?} {:?}",
            self.name, self.nx, self.nt, self.t_max, self.x_min, self.x_max
        )?;
        let mut bytes = Vec::with_capacity(self.values.len() * 24);
        let planes: Vec<&Vec<f64>> = match &self.planes {
            Some((re, im)) => vec![&self.values, re, im],
            None => vec![&self.values],
        };
        for plane in planes {
            for v in plane {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read<R: BufRead>(mut r: R) -> Result<Self> {
        let mut header = String::new();
        r.read_line(&mut header)?;
        let f: Vec<&str> = header.split_whitespace().collect();
        if f.len() != 8 || f[0] != MAGIC {
            return Err(Error::Format("not a dmis-grid file".into()));
        }
        if f[1] != VERSION {
            return Err(Error::Format(format!("unsupported grid version {}", f[1])));
        }
        let bad = |s: &str| Error::Format(format!("bad grid header field {s:?}"));
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(s));
        let real = |s: &str| s.parse::<f64>().map_err(|_| bad(s));
        let (nx, nt) = (int(f[3])?, int(f[4])?);
        let (t_max, x_min, x_max) = (real(f[5])?, real(f[6])?, real(f[7])?);
        if nx < 1 || nt < 2 {
            return Err(Error::Format(format!("grid shape {nt} × {nx} too small")));
        }
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let plane = nt * (nx + 1);
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if bytes.len() % 8 != 0 || (data.len() != plane && data.len() != 3 * plane) {
            return Err(Error::Format(format!(
                "grid payload of {} bytes does not match {nt} × {}",
                bytes.len(),
                nx + 1
            )));
        }
        let planes = (data.len() == 3 * plane).then(|| (data[plane..2 * plane].to_vec(), data[2 * plane..].to_vec()));
        Ok(SolutionGrid {
            name: f[2].to_string(),
            nx,
            nt,
            t_max,
            x_min,
            x_max,
            values: data[..plane].to_vec(),
            planes,
        })
    }
}

/// Classical fourth-order Runge–Kutta on a flat state vector.
struct Rk4 {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(n: usize) -> Self {
        Rk4 {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
        }
    }

    fn step(&mut self, rhs: &mut dyn Rhs, t: f64, dt: f64, y: &mut [f64]) {
        let [k1, k2, k3, k4] = &mut self.k;
        rhs.eval(t, y, k1);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        rhs.eval(t + 0.5 * dt, &self.tmp, k2);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        rhs.eval(t + 0.5 * dt, &self.tmp, k3);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + dt * k3[i];
        }
        rhs.eval(t + dt, &self.tmp, k4);
        for i in 0..y.len() {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        rhs.constrain(y);
    }
}

trait Rhs {
    fn eval(&mut self, t: f64, y: &[f64], dy: &mut [f64]);
    /// Re-imposes algebraic constraints (boundary values) after a step.
    fn constrain(&self, _y: &mut [f64]) {}
}

/// Central differences on `nx + 1` nodes with fixed end values.
struct Dirichlet {
    equation: Equation,
    g: f64,
    x: Vec<f64>,
    dx: f64,
}

impl Rhs for Dirichlet {
    fn eval(&mut self, t: f64, u: &[f64], du: &mut [f64]) {
        let n = u.len();
        let inv_dx2 = 1.0 / (self.dx * self.dx);
        let inv_2dx = 0.5 / self.dx;
        du[0] = 0.0;
        du[n - 1] = 0.0;
        match self.equation {
            Equation::Burgers { viscosity } => {
                for j in 1..n - 1 {
                    let ux = (u[j + 1] - u[j - 1]) * inv_2dx;
                    let uxx = (u[j + 1] - 2.0 * u[j] + u[j - 1]) * inv_dx2;
                    du[j] = -u[j] * ux + viscosity * uxx;
                }
            }
            Equation::Diffusion { diffusivity, forcing } => {
                let source = forcing * (-t).exp();
                for j in 1..n - 1 {
                    let uxx = (u[j + 1] - 2.0 * u[j] + u[j - 1]) * inv_dx2;
                    du[j] = diffusivity * uxx + source * self.x[j];
                }
            }
            _ => unreachable!("periodic equation on a Dirichlet grid"),
        }
    }

    fn constrain(&self, u: &mut [f64]) {
        let n = u.len();
        u[0] = self.g;
        u[n - 1] = self.g;
    }
}

/// Fourier pseudospectral derivatives on `nx` periodic nodes.
struct Spectral {
    equation: Equation,
    n: usize,
    /// Angular wavenumbers in FFT order.
    k: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    hat: Vec<Complex64>,
    buf: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Spectral {
    fn new(equation: Equation, n: usize, length: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let scratch_len = fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len());
        let k = (0..n)
            .map(|m| {
                let m = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
                2.0 * PI * m / length
            })
            .collect();
        Spectral {
            equation,
            n,
            k,
            fwd,
            inv,
            hat: vec![Complex64::new(0.0, 0.0); n],
            buf: vec![Complex64::new(0.0, 0.0); n],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
        }
    }

    fn transform(&mut self, re: &[f64], im: Option<&[f64]>) {
        for m in 0..self.n {
            self.hat[m] = Complex64::new(re[m], im.map_or(0.0, |v| v[m]));
        }
        self.fwd.process_with_scratch(&mut self.hat, &mut self.scratch);
    }

    /// `∂^order` of the last transformed field into `buf` (unnormalized
    /// inverse is rescaled here).
    fn derivative(&mut self, order: u32) {
        let scale = 1.0 / self.n as f64;
        let nyquist = (self.n % 2 == 0).then_some(self.n / 2);
        let i_pow = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0),
        ][(order % 4) as usize];
        for m in 0..self.n {
            let factor = if Some(m) == nyquist && order % 2 == 1 {
                0.0
            } else {
                self.k[m].powi(order as i32) * scale
            };
            self.buf[m] = self.hat[m] * i_pow * factor;
        }
        self.inv.process_with_scratch(&mut self.buf, &mut self.scratch);
    }

    /// Relative energy above two thirds of the Nyquist wavenumber.
    fn tail_fraction(&mut self, re: &[f64], im: Option<&[f64]>) -> f64 {
        self.transform(re, im);
        let cutoff = self.n / 3;
        let (mut tail, mut total) = (0.0, 0.0);
        for m in 0..self.n {
            let e = self.hat[m].norm_sqr();
            let wave = m.min(self.n - m);
            total += e;
            if wave > cutoff {
                tail += e;
            }
        }
        if total == 0.0 {
            0.0
        } else {
            tail / total
        }
    }
}

impl Rhs for Spectral {
    fn eval(&mut self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.n;
        match self.equation {
            Equation::Kdv { dispersion } => {
                self.transform(y, None);
                self.derivative(1);
                for j in 0..n {
                    dy[j] = -y[j] * self.buf[j].re;
                }
                self.derivative(3);
                for j in 0..n {
                    dy[j] -= dispersion * self.buf[j].re;
                }
            }
            Equation::AllenCahn { diffusivity, reaction } => {
                self.transform(y, None);
                self.derivative(2);
                for j in 0..n {
                    dy[j] = diffusivity * self.buf[j].re + reaction * (PI * y[j]).sin();
                }
            }
            Equation::Schrodinger => {
                let (u, v) = y.split_at(n);
                self.transform(u, Some(v));
                self.derivative(2);
                let (du, dv) = dy.split_at_mut(n);
                for j in 0..n {
                    let modulus = u[j] * u[j] + v[j] * v[j];
                    du[j] = -0.5 * self.buf[j].im - modulus * v[j];
                    dv[j] = 0.5 * self.buf[j].re + modulus * u[j];
                }
            }
            _ => unreachable!("Dirichlet equation on a periodic grid"),
        }
    }
}

fn check_size(nx: usize, nt: usize) -> Result<()> {
    if !(NX_RANGE.0..=NX_RANGE.1).contains(&nx) || !(NT_RANGE.0..=NT_RANGE.1).contains(&nt) {
        return Err(Error::Config(format!(
            "grid size nx = {nx}, nt = {nt} outside [{}, {}] × [{}, {}]",
            NX_RANGE.0, NX_RANGE.1, NT_RANGE.0, NT_RANGE.1
        )));
    }
    Ok(())
}

/// Internal step bound and a description of the term that sets it.
fn step_bound(problem: &PdeProblem, dx: f64, u_max: f64) -> (f64, String) {
    let k = PI / dx;
    let (imag, real, what) = match problem.equation {
        Equation::Burgers { viscosity } => {
            let k_fd = 2.0 / dx;
            (2.0 * u_max / dx, viscosity * k_fd * k_fd, "advection dt·|u|/dx and diffusion dt·ν/dx²")
        }
        Equation::Diffusion { diffusivity, .. } => (0.0, 4.0 * diffusivity / (dx * dx), "diffusion dt·c/dx²"),
        Equation::Kdv { dispersion } => (dispersion * k.powi(3) + 2.0 * u_max * k, 0.0, "dispersion dt·δ/dx³"),
        Equation::AllenCahn { diffusivity, reaction } => {
            (0.0, diffusivity * k * k + reaction * PI, "diffusion dt·d/dx²")
        }
        Equation::Schrodinger => (0.5 * k * k + 2.0 * u_max * u_max, 0.0, "dispersion dt/dx²"),
    };
    let dt_imag = if imag > 0.0 { RK4_IMAG / imag } else { f64::INFINITY };
    let dt_real = if real > 0.0 { RK4_REAL / real } else { f64::INFINITY };
    (SAFETY * dt_imag.min(dt_real), what.to_string())
}

/// Integrates `problem` on `[0, T]` and stores `nt` uniform time rows.
pub fn solve(problem: &PdeProblem, nx: usize, nt: usize) -> Result<SolutionGrid> {
    check_size(nx, nt)?;
    let d = problem.domain;
    let dx = d.width() / nx as f64;
    let mut grid = SolutionGrid {
        name: problem.name.clone(),
        nx,
        nt,
        t_max: d.t_max,
        x_min: d.x_min,
        x_max: d.x_max,
        values: Vec::with_capacity(nt * (nx + 1)),
        planes: None,
    };
    let xs: Vec<f64> = (0..=nx).map(|j| grid.x(j)).collect();
    let u0: Vec<[f64; 2]> = xs.iter().map(|&x| problem.initial.eval(x)).collect();
    let complex = problem.out_dim == 2;
    let u_max = u0.iter().map(|v| v[0].hypot(v[1])).fold(0.0, f64::max);
    let (dt_max, bound) = step_bound(problem, dx, 2.0 * u_max.max(1.0));

    let (mut state, mut rhs): (Vec<f64>, Box<dyn Rhs>) = match problem.boundary {
        BoundaryKind::Dirichlet(g) => (
            u0.iter().map(|v| v[0]).collect(),
            Box::new(Dirichlet { equation: problem.equation, g, x: xs.clone(), dx }),
        ),
        BoundaryKind::Periodic => {
            let mut y: Vec<f64> = u0[..nx].iter().map(|v| v[0]).collect();
            if complex {
                y.extend(u0[..nx].iter().map(|v| v[1]));
            }
            (y, Box::new(Spectral::new(problem.equation, nx, d.width())))
        }
    };
    let periodic = problem.is_periodic();
    let mut tail_probe = periodic.then(|| Spectral::new(problem.equation, nx, d.width()));

    let mut re_plane = Vec::new();
    let mut im_plane = Vec::new();
    let mut store = |state: &[f64], first: bool, grid: &mut SolutionGrid| {
        if first {
            grid.values.extend(u0.iter().map(|v| v[0].hypot(v[1])));
            if complex {
                re_plane.extend(u0.iter().map(|v| v[0]));
                im_plane.extend(u0.iter().map(|v| v[1]));
            }
            return;
        }
        let (re, im): (Vec<f64>, Vec<f64>) = if periodic {
            let re: Vec<f64> = (0..=nx).map(|j| state[j % nx]).collect();
            let im: Vec<f64> = if complex { (0..=nx).map(|j| state[nx + j % nx]).collect() } else { vec![0.0; nx + 1] };
            (re, im)
        } else {
            (state.to_vec(), vec![0.0; nx + 1])
        };
        if complex {
            grid.values.extend(re.iter().zip(&im).map(|(a, b)| a.hypot(*b)));
            re_plane.extend(re);
            im_plane.extend(im);
        } else {
            grid.values.extend(re);
        }
    };

    store(&state, true, &mut grid);
    rhs.constrain(&mut state);
    let mut rk = Rk4::new(state.len());
    for n in 1..nt {
        let (t_a, t_b) = (grid.t(n - 1), grid.t(n));
        let substeps = ((t_b - t_a) / dt_max).ceil().max(1.0) as usize;
        let dt = (t_b - t_a) / substeps as f64;
        for s in 0..substeps {
            rk.step(rhs.as_mut(), t_a + s as f64 * dt, dt, &mut state);
        }
        let peak = state.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
        if peak > BLOW_UP {
            return Err(Error::Instability(format!(
                "{}: ‖u‖∞ = {peak:.3e} at t = {t_b:.4} with nx = {nx}, dt = {dt:.3e} (bound: {bound})",
                problem.name
            )));
        }
        if let Some(probe) = tail_probe.as_mut() {
            let (re, im) = if complex { (&state[..nx], Some(&state[nx..])) } else { (&state[..], None) };
            let tail = probe.tail_fraction(re, im);
            if tail > SPECTRAL_TAIL_LIMIT {
                return Err(Error::Instability(format!(
                    "{}: spectral tail energy {tail:.3e} exceeds {SPECTRAL_TAIL_LIMIT:e} at t = {t_b:.4}; \
                     nx = {nx} does not resolve the solution (bound: {bound})",
                    problem.name
                )));
            }
        }
        store(&state, false, &mut grid);
    }
    if complex {
        grid.planes = Some((re_plane, im_plane));
    }
    Ok(grid)
}

/// `∫ |h|² dx` of row `n` by the periodic trapezoidal rule.
pub fn mass(grid: &SolutionGrid, n: usize) -> f64 {
    let dx = (grid.x_max - grid.x_min) / grid.nx as f64;
    grid.row(n)[..grid.nx].iter().map(|v| v * v).sum::<f64>() * dx
}

/// RMS difference between `coarse` and `fine` on the coarse nodes. The fine
/// grid must refine the coarse one by an integer factor in both directions.
pub fn nested_rms_difference(coarse: &SolutionGrid, fine: &SolutionGrid) -> Result<f64> {
    let rx = fine.nx / coarse.nx;
    let rt = (fine.nt - 1) / (coarse.nt - 1);
    if rx * coarse.nx != fine.nx || rt * (coarse.nt - 1) != fine.nt - 1 {
        return Err(Error::Contract("grids are not nested".into()));
    }
    let mut sum = 0.0;
    for n in 0..coarse.nt {
        for j in 0..coarse.cols() {
            sum += (coarse.value(n, j) - fine.value(n * rt, j * rx)).powi(2);
        }
    }
    Ok((sum / (coarse.nt * coarse.cols()) as f64).sqrt())
}
