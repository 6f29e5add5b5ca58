// SPDX-License-Identifier: Apache-2.0

//! Independent oracles shared by the integration suites. Nothing here calls
//! back into the code paths it checks.

#![allow(dead_code)]

use std::collections::HashMap;

use dmis_core::mesh::Triangulation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(n: usize, seed: u64) -> Vec<(usize, f64, f64)> {
    let mut r = rng(seed);
    (0..n).map(|i| (i, r.random::<f64>(), r.random::<f64>())).collect()
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain; returns the hull area.
pub fn hull_area(points: &[(f64, f64)]) -> f64 {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    p.dedup();
    if p.len() < 3 {
        return 0.0;
    }
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    let n = hull.len();
    (0..n).map(|i| cross((0.0, 0.0), hull[i], hull[(i + 1) % n])).sum::<f64>() / 2.0
}

/// Largest normalized incircle determinant of any vertex against any
/// triangle it does not belong to; positive means a violation.
pub fn worst_incircle(mesh: &Triangulation) -> f64 {
    let verts = mesh.vertices();
    let mut worst = f64::NEG_INFINITY;
    for tri in mesh.triangles() {
        let [a, b, c] = tri.map(|v| verts[v].pos);
        for (vi, v) in verts.iter().enumerate() {
            if tri.contains(&vi) {
                continue;
            }
            let d = v.pos;
            let (adx, ady, bdx, bdy, cdx, cdy) = (a.0 - d.0, a.1 - d.1, b.0 - d.0, b.1 - d.1, c.0 - d.0, c.1 - d.1);
            let al = adx * adx + ady * ady;
            let bl = bdx * bdx + bdy * bdy;
            let cl = cdx * cdx + cdy * cdy;
            let det = al * (bdx * cdy - cdx * bdy) + bl * (cdx * ady - adx * cdy) + cl * (adx * bdy - bdx * ady);
            let scale = al * (bdx * cdy).abs().max((cdx * bdy).abs())
                + bl * (cdx * ady).abs().max((adx * cdy).abs())
                + cl * (adx * bdy).abs().max((bdx * ady).abs());
            worst = worst.max(det / scale.max(1e-300));
        }
    }
    worst
}

pub fn triangle_area(mesh: &Triangulation, k: usize) -> f64 {
    let [a, b, c] = mesh.corners(k);
    cross(a, b, c) / 2.0
}

/// Edge-use counts: (interior edges used twice, hull edges used once,
/// edges used any other number of times).
pub fn edge_usage(mesh: &Triangulation) -> (usize, usize, usize) {
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for tri in mesh.triangles() {
        for e in 0..3 {
            let (u, v) = (tri[e], tri[(e + 1) % 3]);
            *count.entry((u.min(v), u.max(v))).or_default() += 1;
        }
    }
    let twice = count.values().filter(|&&c| c == 2).count();
    let once = count.values().filter(|&&c| c == 1).count();
    (twice, once, count.len() - twice - once)
}

/// Number of vertices on the hull boundary including collinear ones.
pub fn hull_boundary_vertices(points: &[(f64, f64)]) -> usize {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    p.dedup();
    let mut hull: Vec<(f64, f64)> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) < 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull.len()
}

pub fn point_in_triangle(tri: [(f64, f64); 3], p: (f64, f64)) -> bool {
    let [a, b, c] = tri;
    cross(a, b, p) >= 0.0 && cross(b, c, p) >= 0.0 && cross(c, a, p) >= 0.0
}

/// Checks the structural invariants and returns a description of the first
/// failure.
pub fn check_triangulation(mesh: &Triangulation) -> Result<(), String> {
    let pts: Vec<(f64, f64)> = mesh.vertices().iter().map(|v| v.pos).collect();
    let worst = worst_incircle(mesh);
    if worst > 1e-10 {
        return Err(format!("empty-circumcircle violated (normalized det {worst:e})"));
    }
    let area: f64 = (0..mesh.triangles().len()).map(|k| triangle_area(mesh, k)).sum();
    let hull = hull_area(&pts);
    if (area - hull).abs() > 1e-9 * hull {
        return Err(format!("triangle area {area} != hull area {hull}"));
    }
    if (0..mesh.triangles().len()).any(|k| triangle_area(mesh, k) <= 0.0) {
        return Err("non-positive triangle".into());
    }
    let (_, once, other) = edge_usage(mesh);
    if other != 0 {
        return Err(format!("{other} edges used more than twice"));
    }
    let hull_verts = hull_boundary_vertices(&pts);
    if once != hull_verts {
        return Err(format!("{once} single-use edges but {hull_verts} hull boundary vertices"));
    }
    Ok(())
}

use dmis_core::ad;
use dmis_core::pde::PdeProblem;
use dmis_core::MlpParams;

/// Random tanh network from the acceptance population: depth 1..=4,
/// width 1..=16, out_dim 1 or 2.
pub fn random_net(seed: u64, out_dim: usize) -> MlpParams {
    let mut r = rng(seed ^ 0x5eed);
    let depth = r.random_range(1..=4);
    let width = r.random_range(1..=16);
    MlpParams::init(depth, width, out_dim, seed).unwrap()
}

fn value(net: &MlpParams, t: f64, x: f64, k: usize) -> f64 {
    net.forward(t, x).unwrap()[k]
}

/// Five-point central differences of the network output, component `k`:
/// returns `[∂t, ∂x, ∂²x, ∂³x]`.
pub fn fd_derivatives(net: &MlpParams, t: f64, x: f64, k: usize, h: f64) -> [f64; 4] {
    let fx = |dx: f64| value(net, t, x + dx, k);
    let ft = |dt: f64| value(net, t + dt, x, k);
    let (m2, m1, z, p1, p2) = (fx(-2.0 * h), fx(-h), fx(0.0), fx(h), fx(2.0 * h));
    let d1 = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
    let d2 = (-m2 + 16.0 * m1 - 30.0 * z + 16.0 * p1 - p2) / (12.0 * h * h);
    let d3 = (-m2 + 2.0 * m1 - 2.0 * p1 + p2) / (2.0 * h * h * h);
    let dt = (ft(-2.0 * h) - 8.0 * ft(-h) + 8.0 * ft(h) - ft(2.0 * h)) / (12.0 * h);
    [dt, d1, d2, d3]
}

/// Residual loss at one point evaluated without any tape.
pub fn residual_value(problem: &PdeProblem, net: &MlpParams, t: f64, x: f64) -> f64 {
    let jet = ad::eval_jet(net, t, x, problem.residual_order()).unwrap();
    problem.residual_loss(&jet).unwrap()
}

/// Central differences of `f(θ)` with base step `h = 1e-4 (1 + |θ|)`, plus
/// one Richardson level (`h` and `h/2`) to cancel the `O(h²)` term.
pub fn fd_param_gradient(net: &MlpParams, f: impl Fn(&MlpParams) -> f64) -> Vec<f64> {
    let mut probe = net.clone();
    (0..net.param_count())
        .map(|i| {
            let theta = net.as_slice()[i];
            let mut central = |h: f64| {
                probe.as_mut_slice()[i] = theta + h;
                let up = f(&probe);
                probe.as_mut_slice()[i] = theta - h;
                let down = f(&probe);
                probe.as_mut_slice()[i] = theta;
                (up - down) / (2.0 * h)
            };
            let h = 1e-4 * (1.0 + theta.abs());
            let coarse = central(h);
            let fine = central(0.5 * h);
            (4.0 * fine - coarse) / 3.0
        })
        .collect()
}

/// Worst `|g − fd| / (|fd| + floor)` over components, with the floor scaled
/// to the gradient's overall size so entries at roundoff level do not count.
pub fn worst_relative(g: &[f64], fd: &[f64]) -> f64 {
    let scale = fd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-3 * scale + 1e-12;
    g.iter()
        .zip(fd)
        .map(|(a, b)| (a - b).abs() / (b.abs() + floor))
        .fold(0.0, f64::max)
}

/// Pearson statistic of `counts` against equal expected frequencies.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

/// Upper 99% quantile of the chi-square law (Wilson–Hilferty).
pub fn chi_square_99(df: usize) -> f64 {
    let k = df as f64;
    let z = 2.326_347_874_040_841;
    k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3)
}

/// Ascending-order permutation, ties kept in index order.
pub fn argsort(v: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    idx
}
