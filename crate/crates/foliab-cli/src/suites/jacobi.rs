//! Adapted Jacobi fields along random leafwise geodesics.

use super::{point_label, random_point, random_vector, split, unit, Accumulator, SuiteError, SuiteOutput, SuiteResult, Tolerances};
use crate::scenario::Scenario;
use foliab::audit::par_map;
use foliab::connections::ConnectionKind;
use foliab::fixtures::Fixture;
use foliab::geometry::{Point, TangentVector};
use foliab::jacobi::{growth_bound_margin, normalize_jacobi, richardson_ratio, JacobiSystem};
use foliab::transport::{integrate_geodesic, CurveSolution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use std::sync::Arc;

pub(super) const TOLERANCES: &[(&str, f64, &str)] = &[
    ("reproduction", 1e-6, "γ̇ and (t − a)γ̇ reproduced nodewise"),
    ("invariant", 1e-6, "verticality of Y, constancy of |HX| and (Y, γ̇)"),
    ("growth", 1e-8, "slack allowed in the exponential growth bound"),
    ("normalization", 1e-8, "(Y*, γ̇) after normalisation"),
    ("variation", 1e-4, "variation field vs. ODE solution at the coarse step"),
    ("richardson", 0.5, "|ratio − 4| of the second-order difference errors"),
];

/// Errors below this are at rounding level and carry no convergence order.
const RICHARDSON_FLOOR: f64 = 1e-9;

struct Draw {
    x: Vec<f64>,
    dir: Vec<f64>,
    x0: Vec<f64>,
    y0: Vec<f64>,
    variation: bool,
}

#[derive(Default)]
struct Outcome {
    length: f64,
    velocity: f64,
    affine: f64,
    y_vertical: f64,
    hx_constant: f64,
    y_pairing: f64,
    normal_parallel: f64,
    growth: f64,
    normalized: f64,
    variation: Option<(f64, f64, f64)>,
}

/// Leafwise geodesic from `x`; the length is halved (at most three times)
/// when the curve would leave the domain.
fn leaf_geodesic(sc: &Scenario, fx: &Fixture, x: &[f64], dir: &[f64]) -> SuiteResult<CurveSolution> {
    let m = &fx.field;
    let p = Point::new(x);
    let g = m.values(x);
    let (ver, _) = split(m, x, dir)?;
    let v = TangentVector::new(&p, &unit(&g, &ver));
    let mut length = sc.jacobi.length;
    for _ in 0..4 {
        let step = sc.jacobi.step.min(length / 10.0);
        let c = integrate_geodesic(m, ConnectionKind::Adapted, &p, &v, length, step)?;
        if !c.partial {
            return Ok(c);
        }
        length *= 0.5;
    }
    Err(SuiteError::Numerical(foliab::Error::BoundaryExit { t: length }))
}

fn solve_one(sc: &Scenario, fx: &Fixture, d: &Draw) -> SuiteResult<Outcome> {
    let m = &fx.field;
    let n = m.dim;
    let gamma = leaf_geodesic(sc, fx, &d.x, &d.dir)?;
    let sys = Arc::new(JacobiSystem::new(m, &gamma)?);
    let mut out = Outcome { length: gamma.t_end(), ..Outcome::default() };
    let t0 = gamma.times[0];
    let v0 = gamma.velocities[0].clone();

    let s = sys.solve(&v0, &vec![0.0; n])?;
    for k in 0..s.len() {
        for i in 0..n {
            out.velocity = out.velocity.max((s.x[k][i] - gamma.velocities[k][i]).abs());
        }
    }
    let s = sys.solve(&vec![0.0; n], &v0)?;
    for k in 0..s.len() {
        for i in 0..n {
            out.affine = out.affine.max((s.x[k][i] - (gamma.times[k] - t0) * gamma.velocities[k][i]).abs());
        }
    }

    let (y0, _) = split(m, &d.x, &d.y0)?;
    let sol = sys.solve(&d.x0, &y0)?;
    out.y_vertical = sol.horizontal_residual();
    out.hx_constant = sol.horizontal_norm_deviation();
    out.y_pairing = sol.y_velocity_drift();
    out.normal_parallel = sol.normal_connection_residual(m)?;
    out.growth = (-growth_bound_margin(&sol)).max(0.0);
    let ns = normalize_jacobi(&sol)?;
    out.normalized = (0..ns.len()).map(|k| ns.inner_with_velocity(k, &ns.y[k]).abs()).fold(0.0, f64::max);
    if d.variation {
        out.variation = Some(richardson_ratio(m, &sol, sc.jacobi.variation_step)?);
    }
    Ok(out)
}

pub fn run(sc: &Scenario, fx: &Fixture, seed: u64, tol: &Tolerances) -> SuiteResult<SuiteOutput> {
    let n = fx.field.dim;
    let samples = sc.samples.unwrap_or(200);
    let region = sc.sampling_region(fx);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Draw> = (0..samples)
        .map(|i| Draw {
            x: random_point(&mut rng, &region),
            dir: random_vector(&mut rng, n),
            x0: random_vector(&mut rng, n),
            y0: random_vector(&mut rng, n),
            variation: i < sc.jacobi.variation_samples,
        })
        .collect();
    let outcomes = par_map(&draws, |d| solve_one(sc, fx, d));

    let mut acc = Accumulator::default();
    let mut lengths = Vec::with_capacity(samples);
    let mut ratios = Vec::new();
    for (d, o) in draws.iter().zip(outcomes) {
        let o = o?;
        acc.sample(point_label(&d.x));
        lengths.push(o.length);
        acc.record("velocity_reproduced", "γ̇ is an adapted Jacobi field", tol.get("reproduction"), o.velocity);
        acc.record("affine_velocity_reproduced", "(t − a)γ̇ is an adapted Jacobi field", tol.get("reproduction"), o.affine);
        acc.record("y_stays_vertical", "Y vertical along γ when vertical at a", tol.get("invariant"), o.y_vertical);
        acc.record("horizontal_norm_constant", "|HX| constant along γ", tol.get("invariant"), o.hx_constant);
        acc.record("y_velocity_pairing_constant", "(Y, γ̇) constant along γ", tol.get("invariant"), o.y_pairing);
        acc.record("normal_part_parallel", "HX parallel for the normal connection", tol.get("invariant"), o.normal_parallel);
        acc.record("growth_bound", "|X|² + |Y|² grows at most like e^{C(t−a)}", tol.get("growth"), o.growth);
        acc.record("normalized_y_orthogonal", "normalised field has Y* ⟂ γ̇", tol.get("normalization"), o.normalized);
        if let Some((e1, e2, ratio)) = o.variation {
            ratios.push(json!({ "coarse_error": e1, "fine_error": e2, "ratio": ratio }));
            acc.record("variation_field_agreement", "variation of leafwise geodesics solves the Jacobi equation", tol.get("variation"), e1);
            let r = if e1 <= RICHARDSON_FLOOR { 0.0 } else { (ratio - 4.0).abs() };
            acc.record("variation_richardson_order", "second-order convergence of the variation field", tol.get("richardson"), r);
        }
    }

    Ok(SuiteOutput {
        fixture: fx.name.clone(),
        checks: acc.rows(),
        details: json!({
            "samples": samples,
            "region": region,
            "geodesic_lengths": { "min": lengths.iter().copied().fold(f64::INFINITY, f64::min), "max": lengths.iter().copied().fold(0.0, f64::max) },
            "variation": ratios,
        }),
        tables: vec![acc.table("solves")],
    })
}
