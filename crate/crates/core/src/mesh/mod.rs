// SPDX-License-Identifier: Apache-2.0

//! Delaunay triangulation over normalized `(t, x)` coordinates, point
//! location, and piecewise-linear interpolation of vertex values.
//!
//! Construction is incremental Bowyer–Watson. The convex hull is closed off
//! with ghost triangles sharing a symbolic vertex at infinity instead of a
//! finite super-triangle, so hull edges come out right for any input.

mod predicates;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::Write;

pub use predicates::{incircle, orient, orient_det, Point};

use crate::error::{Error, Result};

const GHOST: usize = usize::MAX;

/// Points closer than this (in normalized units) are merged.
pub const DUPLICATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vertex {
    pub id: usize,
    pub pos: Point,
}

/// Result of [`Triangulation::locate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Triangle(usize),
    Outside,
}

/// Interpolation weights of a query point over (up to) three vertices,
/// stored as vertex indices into [`Triangulation::vertices`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub vertices: [usize; 3],
    pub weights: [f64; 3],
}

impl Stencil {
    pub fn apply(&self, values: &[f64]) -> f64 {
        if self.weights[1] == 0.0 && self.weights[2] == 0.0 && self.weights[0] == 1.0 {
            return values[self.vertices[0]];
        }
        self.weights[0] * values[self.vertices[0]]
            + self.weights[1] * values[self.vertices[1]]
            + self.weights[2] * values[self.vertices[2]]
    }
}

#[derive(Debug, Clone)]
pub struct Triangulation {
    vertices: Vec<Vertex>,
    values: Vec<f64>,
    /// Counter-clockwise vertex-index triples.
    triangles: Vec<[usize; 3]>,
    /// `neighbors[k][e]` lies across the edge from corner `e` to `e + 1`.
    neighbors: Vec<[Option<usize>; 3]>,
    grid: LocateGrid,
}

impl Triangulation {
    /// Delaunay triangulation of `(id, t, x)` points.
    ///
    /// Points are inserted in ascending id order, so the result does not
    /// depend on the order of `points`. Of two points within
    /// [`DUPLICATE_TOLERANCE`] the lower id is kept.
    pub fn build(points: &[(usize, f64, f64)]) -> Result<Self> {
        let mut sorted: Vec<Vertex> = points
            .iter()
            .map(|&(id, t, x)| Vertex { id, pos: (t, x) })
            .collect();
        if let Some(v) = sorted.iter().find(|v| !v.pos.0.is_finite() || !v.pos.1.is_finite()) {
            return Err(Error::NonFinite(format!("mesh point {} at {:?}", v.id, v.pos)));
        }
        sorted.sort_by_key(|v| v.id);
        if sorted.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::Contract("mesh point ids must be unique".into()));
        }
        let vertices = dedup(sorted);
        if vertices.len() < 3 {
            return Err(Error::DegenerateGeometry(format!(
                "{} distinct points, need at least 3",
                vertices.len()
            )));
        }
        let triangles = BowyerWatson::run(&vertices)?;
        let neighbors = neighbor_table(&triangles);
        let grid = LocateGrid::new(&vertices, &triangles);
        Ok(Triangulation {
            values: vec![0.0; vertices.len()],
            vertices,
            triangles,
            neighbors,
            grid,
        })
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn neighbors(&self) -> &[[Option<usize>; 3]] {
        &self.neighbors
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Triangles as vertex-id triples.
    pub fn id_triples(&self) -> Vec<[usize; 3]> {
        self.triangles
            .iter()
            .map(|tri| tri.map(|v| self.vertices[v].id))
            .collect()
    }

    /// Id triples, each sorted, in sorted order: a canonical form for
    /// comparing triangulations.
    pub fn canonical_triples(&self) -> Vec<[usize; 3]> {
        let mut out: Vec<[usize; 3]> = self
            .id_triples()
            .into_iter()
            .map(|mut t| {
                t.sort_unstable();
                t
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn position(&self, v: usize) -> Point {
        self.vertices[v].pos
    }

    pub fn corners(&self, tri: usize) -> [Point; 3] {
        self.triangles[tri].map(|v| self.vertices[v].pos)
    }

    /// Sets vertex values in [`vertices`](Self::vertices) order.
    pub fn set_values(&mut self, values: Vec<f64>) -> Result<()> {
        if values.len() != self.vertices.len() {
            return Err(Error::Contract(format!(
                "{} values for {} vertices",
                values.len(),
                self.vertices.len()
            )));
        }
        self.values = values;
        Ok(())
    }

    /// Sets vertex values through a lookup by vertex id.
    pub fn set_values_by_id(&mut self, value_of: impl Fn(usize) -> f64) {
        self.values = self.vertices.iter().map(|v| value_of(v.id)).collect();
    }

    /// The lowest-numbered triangle containing `p` (boundary included).
    pub fn locate(&self, p: Point) -> Location {
        self.grid.locate(p, &self.vertices, &self.triangles)
    }

    /// Barycentric weights inside the hull; nearest vertex outside it.
    pub fn stencil(&self, p: Point) -> Stencil {
        match self.locate(p) {
            Location::Triangle(k) => {
                let tri = self.triangles[k];
                let [a, b, c] = self.corners(k);
                let area = orient_det(a, b, c);
                let wa = orient_det(p, b, c) / area;
                let wb = orient_det(a, p, c) / area;
                let wc = orient_det(a, b, p) / area;
                Stencil { vertices: tri, weights: [wa, wb, wc] }
            }
            Location::Outside => {
                let v = self.nearest_vertex(p);
                Stencil { vertices: [v; 3], weights: [1.0, 0.0, 0.0] }
            }
        }
    }

    /// Index of the closest vertex; ties go to the lower index.
    pub fn nearest_vertex(&self, p: Point) -> usize {
        let dist = |v: &Vertex| (v.pos.0 - p.0).powi(2) + (v.pos.1 - p.1).powi(2);
        let mut best = 0;
        let mut best_d = dist(&self.vertices[0]);
        for (i, v) in self.vertices.iter().enumerate().skip(1) {
            let d = dist(v);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    pub fn interpolate(&self, p: Point) -> f64 {
        self.stencil(p).apply(&self.values)
    }

    /// CSV `id,t,x,value`.
    pub fn write_vertices_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "id,t,x,value")?;
        for (v, value) in self.vertices.iter().zip(&self.values) {
            writeln!(w, "{},{},{},{}", v.id, v.pos.0, v.pos.1, value)?;
        }
        Ok(())
    }

    /// CSV `triangle,a,b,c` with vertex ids.
    pub fn write_triangles_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "triangle,a,b,c")?;
        for (k, [a, b, c]) in self.id_triples().into_iter().enumerate() {
            writeln!(w, "{k},{a},{b},{c}")?;
        }
        Ok(())
    }
}

/// Drops points within the duplicate tolerance of an earlier point.
fn dedup(sorted_by_id: Vec<Vertex>) -> Vec<Vertex> {
    let mut order: Vec<usize> = (0..sorted_by_id.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (sorted_by_id[a].pos, sorted_by_id[b].pos);
        pa.0.total_cmp(&pb.0).then(pa.1.total_cmp(&pb.1))
    });
    let mut dropped = vec![false; sorted_by_id.len()];
    for (k, &i) in order.iter().enumerate() {
        let pi = sorted_by_id[i].pos;
        for &j in &order[k + 1..] {
            let pj = sorted_by_id[j].pos;
            if pj.0 - pi.0 > DUPLICATE_TOLERANCE {
                break;
            }
            let d2 = (pj.0 - pi.0).powi(2) + (pj.1 - pi.1).powi(2);
            if d2 <= DUPLICATE_TOLERANCE * DUPLICATE_TOLERANCE && !dropped[i] {
                // The later id (larger index) loses.
                dropped[i.max(j)] = true;
            }
        }
    }
    sorted_by_id
        .into_iter()
        .zip(dropped)
        .filter_map(|(v, d)| (!d).then_some(v))
        .collect()
}

fn neighbor_table(triangles: &[[usize; 3]]) -> Vec<[Option<usize>; 3]> {
    let mut edges = HashMap::with_capacity(triangles.len() * 3);
    for (k, tri) in triangles.iter().enumerate() {
        for e in 0..3 {
            edges.insert((tri[e], tri[(e + 1) % 3]), k);
        }
    }
    triangles
        .iter()
        .map(|tri| {
            let mut n = [None; 3];
            for (e, slot) in n.iter_mut().enumerate() {
                *slot = edges.get(&(tri[(e + 1) % 3], tri[e])).copied();
            }
            n
        })
        .collect()
}

/// Incremental construction state. Ghost triangles are stored as
/// `[a, b, GHOST]` with the outside of the hull to the left of `a → b`.
struct BowyerWatson<'v> {
    pts: &'v [Vertex],
    tris: Vec<[usize; 3]>,
    alive: Vec<bool>,
    edges: HashMap<(usize, usize), usize>,
    last: usize,
}

impl<'v> BowyerWatson<'v> {
    fn run(pts: &'v [Vertex]) -> Result<Vec<[usize; 3]>> {
        let (a, b) = (0, 1);
        let c = (2..pts.len())
            .find(|&c| orient(pts[a].pos, pts[b].pos, pts[c].pos) != Ordering::Equal)
            .ok_or_else(|| Error::DegenerateGeometry("all points are collinear".into()))?;
        let (a, b) = if orient(pts[a].pos, pts[b].pos, pts[c].pos) == Ordering::Greater {
            (a, b)
        } else {
            (b, a)
        };

        let mut bw = BowyerWatson {
            pts,
            tris: Vec::with_capacity(pts.len() * 4),
            alive: Vec::with_capacity(pts.len() * 4),
            edges: HashMap::with_capacity(pts.len() * 12),
            last: 0,
        };
        bw.add([a, b, c]);
        bw.add([b, a, GHOST]);
        bw.add([c, b, GHOST]);
        bw.add([a, c, GHOST]);
        bw.last = 0;

        for p in 2..pts.len() {
            if p != c {
                bw.insert(p);
            }
        }
        Ok(bw
            .tris
            .iter()
            .zip(&bw.alive)
            .filter(|(t, &alive)| alive && !t.contains(&GHOST))
            .map(|(t, _)| *t)
            .collect())
    }

    fn pos(&self, v: usize) -> Point {
        self.pts[v].pos
    }

    fn add(&mut self, tri: [usize; 3]) -> usize {
        let k = self.tris.len();
        for e in 0..3 {
            self.edges.insert((tri[e], tri[(e + 1) % 3]), k);
        }
        self.tris.push(tri);
        self.alive.push(true);
        k
    }

    fn remove(&mut self, k: usize) {
        let tri = self.tris[k];
        for e in 0..3 {
            self.edges.remove(&(tri[e], tri[(e + 1) % 3]));
        }
        self.alive[k] = false;
    }

    fn across(&self, k: usize, e: usize) -> usize {
        let tri = self.tris[k];
        self.edges[&(tri[(e + 1) % 3], tri[e])]
    }

    fn conflicts(&self, k: usize, p: Point) -> bool {
        let [a, b, c] = self.tris[k];
        if c == GHOST {
            let (pa, pb) = (self.pos(a), self.pos(b));
            return match orient(pa, pb, p) {
                Ordering::Greater => true,
                Ordering::Less => false,
                Ordering::Equal => {
                    let along_a = (p.0 - pa.0) * (pb.0 - pa.0) + (p.1 - pa.1) * (pb.1 - pa.1);
                    let along_b = (p.0 - pb.0) * (pa.0 - pb.0) + (p.1 - pb.1) * (pa.1 - pb.1);
                    along_a > 0.0 && along_b > 0.0
                }
            };
        }
        incircle(self.pos(a), self.pos(b), self.pos(c), p) == Ordering::Greater
    }

    /// Visibility walk from the most recent triangle; returns a triangle in
    /// conflict with `p`.
    fn find_conflict(&self, p: Point) -> usize {
        let mut k = self.last;
        let mut steps = 0;
        'walk: while steps < 4 * self.tris.len() {
            steps += 1;
            let tri = self.tris[k];
            if tri[2] == GHOST {
                if self.conflicts(k, p) {
                    return k;
                }
                break;
            }
            // Rotate the starting edge so the walk cannot cycle.
            for i in 0..3 {
                let e = (i + steps) % 3;
                let (u, v) = (tri[e], tri[(e + 1) % 3]);
                if orient(self.pos(u), self.pos(v), p) == Ordering::Less {
                    k = self.across(k, e);
                    continue 'walk;
                }
            }
            if self.conflicts(k, p) {
                return k;
            }
            break;
        }
        (0..self.tris.len())
            .find(|&k| self.alive[k] && self.conflicts(k, p))
            .expect("every inserted point conflicts with some triangle")
    }

    fn insert(&mut self, p: usize) {
        let pp = self.pos(p);
        let start = self.find_conflict(pp);

        let mut in_cavity: HashMap<usize, bool> = HashMap::new();
        in_cavity.insert(start, true);
        let mut cavity = vec![start];
        let mut boundary = Vec::new();
        let mut i = 0;
        while i < cavity.len() {
            let k = cavity[i];
            i += 1;
            for e in 0..3 {
                let n = self.across(k, e);
                let inside = match in_cavity.get(&n) {
                    Some(&flag) => flag,
                    None => {
                        let flag = self.conflicts(n, pp);
                        in_cavity.insert(n, flag);
                        if flag {
                            cavity.push(n);
                        }
                        flag
                    }
                };
                if !inside {
                    let tri = self.tris[k];
                    boundary.push((tri[e], tri[(e + 1) % 3]));
                }
            }
        }

        for &k in &cavity {
            self.remove(k);
        }
        for (u, v) in boundary {
            let tri = if u == GHOST {
                [v, p, GHOST]
            } else if v == GHOST {
                [p, u, GHOST]
            } else {
                [u, v, p]
            };
            let k = self.add(tri);
            if tri[2] != GHOST {
                self.last = k;
            }
        }
    }
}

/// Uniform bucket grid over the vertex bounding box. Each cell lists, in
/// ascending order, every triangle whose bounding box meets it.
#[derive(Debug, Clone)]
struct LocateGrid {
    lo: Point,
    hi: Point,
    origin: Point,
    cell: Point,
    dims: (usize, usize),
    buckets: Vec<Vec<usize>>,
}

impl LocateGrid {
    fn new(vertices: &[Vertex], triangles: &[[usize; 3]]) -> Self {
        let (mut lo, mut hi) = ((f64::INFINITY, f64::INFINITY), (f64::NEG_INFINITY, f64::NEG_INFINITY));
        for v in vertices {
            lo = (lo.0.min(v.pos.0), lo.1.min(v.pos.1));
            hi = (hi.0.max(v.pos.0), hi.1.max(v.pos.1));
        }
        let side = ((triangles.len() as f64 / 2.0).sqrt().ceil() as usize).clamp(1, 256);
        let span = ((hi.0 - lo.0).max(f64::MIN_POSITIVE), (hi.1 - lo.1).max(f64::MIN_POSITIVE));
        let mut grid = LocateGrid {
            lo,
            hi,
            origin: lo,
            cell: (span.0 / side as f64, span.1 / side as f64),
            dims: (side, side),
            buckets: vec![Vec::new(); side * side],
        };
        for (k, tri) in triangles.iter().enumerate() {
            let ps = tri.map(|v| vertices[v].pos);
            let (i0, j0) = grid.cell_of((ps[0].0.min(ps[1].0).min(ps[2].0), ps[0].1.min(ps[1].1).min(ps[2].1)));
            let (i1, j1) = grid.cell_of((ps[0].0.max(ps[1].0).max(ps[2].0), ps[0].1.max(ps[1].1).max(ps[2].1)));
            for i in i0..=i1 {
                for j in j0..=j1 {
                    grid.buckets[i * side + j].push(k);
                }
            }
        }
        grid
    }

    fn cell_of(&self, p: Point) -> (usize, usize) {
        let f = |v: f64, o: f64, c: f64, n: usize| (((v - o) / c).floor().max(0.0) as usize).min(n - 1);
        (f(p.0, self.origin.0, self.cell.0, self.dims.0), f(p.1, self.origin.1, self.cell.1, self.dims.1))
    }

    fn locate(&self, p: Point, vertices: &[Vertex], triangles: &[[usize; 3]]) -> Location {
        if p.0 < self.lo.0 || p.1 < self.lo.1 || p.0 > self.hi.0 || p.1 > self.hi.1 {
            return Location::Outside;
        }
        let (i, j) = self.cell_of(p);
        for &k in &self.buckets[i * self.dims.1 + j] {
            let [a, b, c] = triangles[k].map(|v| vertices[v].pos);
            if orient(a, b, p) != Ordering::Less
                && orient(b, c, p) != Ordering::Less
                && orient(c, a, p) != Ordering::Less
            {
                return Location::Triangle(k);
            }
        }
        Location::Outside
    }
}

/// Lowest-numbered triangle containing `p` by exhaustive search.
pub fn locate_brute_force(mesh: &Triangulation, p: Point) -> Location {
    (0..mesh.triangles.len())
        .find(|&k| {
            let [a, b, c] = mesh.corners(k);
            orient(a, b, p) != Ordering::Less
                && orient(b, c, p) != Ordering::Less
                && orient(c, a, p) != Ordering::Less
        })
        .map_or(Location::Outside, Location::Triangle)
}
