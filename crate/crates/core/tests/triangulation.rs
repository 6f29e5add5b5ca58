// SPDX-License-Identifier: Apache-2.0

mod common;

use common::*;
use dmis_core::mesh::{locate_brute_force, Location, Triangulation};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn random_sets_satisfy_delaunay_invariants() {
    for (seed, n) in [(1u64, 3usize), (2, 4), (3, 10), (4, 57), (5, 200), (6, 500)] {
        let pts = random_points(n, seed);
        let mesh = Triangulation::build(&pts).unwrap();
        check_triangulation(&mesh).unwrap_or_else(|e| panic!("n={n} seed={seed}: {e}"));
    }
}

#[test]
fn lattice_with_cocircular_and_collinear_points() {
    let mut pts = Vec::new();
    for i in 0..21 {
        for j in 0..21 {
            pts.push((i * 21 + j, i as f64 / 20.0, j as f64 / 20.0));
        }
    }
    let mesh = Triangulation::build(&pts).unwrap();
    check_triangulation(&mesh).unwrap();
    assert_eq!(mesh.triangles().len(), 2 * 20 * 20);
}

#[test]
fn two_hundred_points_pass_brute_force_incircle() {
    let mesh = Triangulation::build(&random_points(200, 99)).unwrap();
    assert!(worst_incircle(&mesh) <= 1e-10);
}

#[test]
fn rebuild_is_deterministic_and_order_independent() {
    let mut pts = random_points(300, 17);
    let a = Triangulation::build(&pts).unwrap();
    let b = Triangulation::build(&pts).unwrap();
    assert_eq!(a.id_triples(), b.id_triples());
    pts.reverse();
    let c = Triangulation::build(&pts).unwrap();
    assert_eq!(a.canonical_triples(), c.canonical_triples());
}

#[test]
fn locate_agrees_with_exhaustive_search() {
    let mesh = Triangulation::build(&random_points(150, 5)).unwrap();
    let mut r = rng(6);
    for _ in 0..1000 {
        let p = (r.random_range(-0.1..1.1), r.random_range(-0.1..1.1));
        let fast = mesh.locate(p);
        assert_eq!(fast, locate_brute_force(&mesh, p));
        let oracle = (0..mesh.triangles().len()).find(|&k| point_in_triangle(mesh.corners(k), p));
        match fast {
            Location::Triangle(k) => assert!(point_in_triangle(mesh.corners(k), p) || oracle.is_none()),
            Location::Outside => assert!(oracle.is_none(), "{p:?} inside triangle {oracle:?}"),
        }
    }
}

#[test]
fn affine_functions_are_reproduced() {
    let mut mesh = Triangulation::build(&random_points(120, 8)).unwrap();
    let f = |t: f64, x: f64| 0.3 - 1.7 * t + 2.5 * x;
    mesh.set_values_by_id(|_| 0.0);
    let values: Vec<f64> = mesh.vertices().iter().map(|v| f(v.pos.0, v.pos.1)).collect();
    mesh.set_values(values).unwrap();
    let mut r = rng(9);
    let mut checked = 0;
    while checked < 1000 {
        let p = (r.random::<f64>(), r.random::<f64>());
        if mesh.locate(p) == Location::Outside {
            continue;
        }
        assert!((mesh.interpolate(p) - f(p.0, p.1)).abs() < 1e-9);
        checked += 1;
    }
    for (v, value) in mesh.vertices().iter().zip(mesh.values()) {
        assert_eq!(mesh.interpolate(v.pos), *value);
    }
}

#[test]
fn interpolation_is_continuous_across_edges() {
    let mut mesh = Triangulation::build(&random_points(80, 10)).unwrap();
    let mut r = rng(11);
    let values: Vec<f64> = (0..mesh.vertices().len()).map(|_| r.random::<f64>()).collect();
    mesh.set_values(values.clone()).unwrap();
    let bary = |k: usize, p: (f64, f64)| {
        let [a, b, c] = mesh.corners(k);
        let area = dmis_core::mesh::orient_det(a, b, c);
        let w = [
            dmis_core::mesh::orient_det(p, b, c) / area,
            dmis_core::mesh::orient_det(a, p, c) / area,
            dmis_core::mesh::orient_det(a, b, p) / area,
        ];
        let tri = mesh.triangles()[k];
        (0..3).map(|i| w[i] * values[tri[i]]).sum::<f64>()
    };
    let mut checked = 0;
    for (k, nbrs) in mesh.neighbors().iter().enumerate() {
        for (e, n) in nbrs.iter().enumerate() {
            let Some(n) = *n else { continue };
            let tri = mesh.triangles()[k];
            let (a, b) = (mesh.position(tri[e]), mesh.position(tri[(e + 1) % 3]));
            let s: f64 = r.random();
            let p = (a.0 + s * (b.0 - a.0), a.1 + s * (b.1 - a.1));
            assert!((bary(k, p) - bary(n, p)).abs() < 1e-12);
            checked += 1;
        }
    }
    assert!(checked >= 100);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn invariants_hold_for_arbitrary_sets(seed in 0u64..10_000, n in 3usize..120) {
        let pts = random_points(n, seed);
        let mesh = Triangulation::build(&pts).unwrap();
        prop_assert!(check_triangulation(&mesh).is_ok(), "{:?}", check_triangulation(&mesh));
    }
}
