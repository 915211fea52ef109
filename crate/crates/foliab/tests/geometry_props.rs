mod common;

use common::{draw, gnorm, parts, resolve};
use foliab::geometry::{eval_metric, inverse_metric, DiffMode, DifferentiationConfig};
use foliab::jet::JetSpace;
use foliab::linalg;
use nalgebra::DMatrix;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splitting_is_an_orthogonal_projection(d in draw()) {
        let (fx, p, vs) = resolve(&d);
        let v = &vs[0];
        let scale = gnorm(fx, &p, v).max(1.0);
        let (vert, horiz) = parts(fx, &p, v);
        let (vv, vh) = parts(fx, &p, &vert);
        let (hv, hh) = parts(fx, &p, &horiz);
        prop_assert!(gnorm(fx, &p, &linalg::sub(&vv, &vert)) <= 1e-10 * scale);
        prop_assert!(gnorm(fx, &p, &vh) <= 1e-10 * scale);
        prop_assert!(gnorm(fx, &p, &hv) <= 1e-10 * scale);
        prop_assert!(gnorm(fx, &p, &linalg::sub(&hh, &horiz)) <= 1e-10 * scale);
        let g = fx.field.values(p.as_slice());
        prop_assert!(linalg::inner(&g, &vert, &horiz).abs() <= 1e-10 * scale * scale);
        let sum: Vec<f64> = vert.iter().zip(&horiz).map(|(a, b)| a + b).collect();
        prop_assert!(linalg::max_abs(&linalg::sub(&sum, v)) <= 1e-12 * scale);
    }

    #[test]
    fn inverse_metric_inverts(d in draw()) {
        let (fx, p, _) = resolve(&d);
        let g = eval_metric(&fx.field, &p).unwrap();
        let gi = inverse_metric(&fx.field, &p).unwrap();
        let n = fx.field.dim;
        prop_assert!((&g * &gi - DMatrix::<f64>::identity(n, n)).abs().max() <= 1e-10);
    }

    #[test]
    fn dual_and_finite_difference_derivatives_agree(d in draw()) {
        let (fx, p, _) = resolve(&d);
        let fd = fx.clone().with_diff(DifferentiationConfig { mode: DiffMode::FiniteDifference, fd_step: 1e-5, max_order: 4 });
        let exact = fx.field.jets(p.as_slice(), 2).unwrap();
        let approx = fd.field.jets(p.as_slice(), 2).unwrap();
        let space = JetSpace::get(fx.field.dim, 2);
        for (a, b) in exact.iter().zip(&approx) {
            for mono in space.monomials() {
                let (x, y) = (a.derivative(mono), b.derivative(mono));
                prop_assert!((x - y).abs() <= 1e-4 * x.abs().max(1.0), "{mono:?}: dual {x} vs fd {y}");
            }
        }
    }
}
