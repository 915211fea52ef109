mod common;

use common::{draw, gnorm, parts, resolve};
use foliab::connections::ConnectionKind;
use foliab::fixtures::Fixture;
use foliab::geometry::{Point, TangentVector};
use foliab::jacobi::{growth_bound_margin, JacobiSystem};
use foliab::linalg;
use foliab::transport::integrate_geodesic;
use proptest::prelude::*;
use std::sync::Arc;

/// Unit-speed leafwise geodesic of length one from `p` in the direction of
/// the vertical part of `raw`.
fn leaf_system(fx: &Fixture, p: &Point, raw: &[f64]) -> Option<Arc<JacobiSystem>> {
    let (w, _) = parts(fx, p, raw);
    let len = gnorm(fx, p, &w);
    if len < 1e-3 {
        return None;
    }
    let v: Vec<f64> = w.iter().map(|c| c / len).collect();
    let gamma = integrate_geodesic(&fx.field, ConnectionKind::Adapted, p, &TangentVector::new(p, &v), 1.0, 1e-2).ok()?;
    if gamma.partial {
        return None;
    }
    Some(Arc::new(JacobiSystem::new(&fx.field, &gamma).unwrap()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn jacobi_fields_superpose(d in draw(), a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let (fx, p, vs) = resolve(&d);
        let sys = leaf_system(fx, &p, &vs[0]);
        prop_assume!(sys.is_some());
        let sys = sys.unwrap();
        let (y1, _) = parts(fx, &p, &vs[2]);
        let x1 = vs[1].clone();
        let x2 = vs[2].clone();
        let (y2, _) = parts(fx, &p, &vs[1]);
        let comb = |u: &[f64], w: &[f64]| -> Vec<f64> { u.iter().zip(w).map(|(s, t)| a * s + b * t).collect() };
        let s1 = sys.solve(&x1, &y1).unwrap();
        let s2 = sys.solve(&x2, &y2).unwrap();
        let s = sys.solve(&comb(&x1, &x2), &comb(&y1, &y2)).unwrap();
        let scale = s1.x.iter().chain(&s1.y).chain(&s2.x).chain(&s2.y).map(|v| linalg::max_abs(v)).fold(1.0, f64::max);
        for k in 0..s.len() {
            prop_assert!(linalg::max_abs(&linalg::sub(&s.x[k], &comb(&s1.x[k], &s2.x[k]))) <= 1e-8 * scale);
            prop_assert!(linalg::max_abs(&linalg::sub(&s.y[k], &comb(&s1.y[k], &s2.y[k]))) <= 1e-8 * scale);
        }
    }

    #[test]
    fn endpoint_map_has_full_rank(d in draw()) {
        let (fx, p, vs) = resolve(&d);
        let sys = leaf_system(fx, &p, &vs[0]);
        prop_assume!(sys.is_some());
        let m = &fx.field;
        prop_assert_eq!(sys.unwrap().endpoint_rank(1e-6).unwrap(), m.dim + m.spec.n_leafwise);
    }

    #[test]
    fn adapted_jacobi_invariants_hold(d in draw()) {
        let (fx, p, vs) = resolve(&d);
        let sys = leaf_system(fx, &p, &vs[0]);
        prop_assume!(sys.is_some());
        let sys = sys.unwrap();
        let (y0, _) = parts(fx, &p, &vs[2]);
        let sol = sys.solve(&vs[1], &y0).unwrap();
        prop_assert!(sol.horizontal_residual() <= 1e-6, "Y leaves the vertical space: {}", sol.horizontal_residual());
        prop_assert!(sol.horizontal_norm_deviation() <= 1e-6, "|HX| varies by {}", sol.horizontal_norm_deviation());
        prop_assert!(sol.y_velocity_drift() <= 1e-6, "(Y, velocity) varies by {}", sol.y_velocity_drift());
        let nc = sol.normal_connection_residual(&fx.field).unwrap();
        prop_assert!(nc <= 1e-6, "normal part not parallel: {nc}");
        prop_assert!(growth_bound_margin(&sol) >= -1e-8);
    }
}
