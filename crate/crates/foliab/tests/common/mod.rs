//! Shared fixtures and samplers for the property tests.
#![allow(dead_code)]

use foliab::fixtures::{builtin, Fixture};
use foliab::geometry::{Domain, Point};
use foliab::linalg;
use proptest::prelude::*;
use std::sync::OnceLock;

/// Fixtures exercised by the property tests (the singular one only where
/// its edge matters).
pub const NAMES: [&str; 4] = ["FIX-PRODUCT", "FIX-SLOPE", "FIX-WARP", "FIX-HOPF"];

pub fn fixtures() -> &'static [Fixture] {
    static ALL: OnceLock<Vec<Fixture>> = OnceLock::new();
    ALL.get_or_init(|| NAMES.iter().map(|n| builtin(n).expect("built-in fixture")).collect())
}

pub fn fixture(name: &str) -> &'static Fixture {
    fixtures().iter().find(|f| f.name == name).expect("known fixture")
}

/// Central fifth of the fixture domain.
pub fn region(fx: &Fixture) -> Domain {
    fx.field.domain.scaled(0.2)
}

/// Maps unit-cube coordinates into `region`.
pub fn point_in(d: &Domain, u: &[f64]) -> Point {
    Point::new(&d.lo.iter().zip(&d.hi).zip(u).map(|((a, b), t)| a + t * (b - a)).collect::<Vec<_>>())
}

/// `(fixture index, unit-cube coordinates, three raw vectors in [−1, 1]³)`.
pub fn draw() -> impl Strategy<Value = (usize, Vec<f64>, Vec<Vec<f64>>)> {
    (
        0..NAMES.len(),
        prop::collection::vec(0.0..1.0f64, 3),
        prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 3), 3),
    )
}

/// Resolves a draw into a fixture, a point and raw vectors of the right length.
pub fn resolve(d: &(usize, Vec<f64>, Vec<Vec<f64>>)) -> (&'static Fixture, Point, Vec<Vec<f64>>) {
    let fx = &fixtures()[d.0];
    let n = fx.field.dim;
    let p = point_in(&region(fx), &d.1[..n]);
    let vs = d.2.iter().map(|v| v[..n].to_vec()).collect();
    (fx, p, vs)
}

/// g-norm at `p`.
pub fn gnorm(fx: &Fixture, p: &Point, v: &[f64]) -> f64 {
    linalg::gnorm(&fx.field.values(p.as_slice()), v)
}

/// Vertical and horizontal parts of `v` at `p`.
pub fn parts(fx: &Fixture, p: &Point, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let t = foliab::geometry::TangentVector::new(p, v);
    let (a, b) = foliab::geometry::split_tangent(&fx.field, &t).expect("split");
    (a.as_slice().to_vec(), b.as_slice().to_vec())
}
