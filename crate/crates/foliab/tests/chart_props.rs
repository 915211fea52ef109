mod common;

use common::{fixtures, point_in, region};
use foliab::linalg;
use foliab::normal_charts::{
    gamma_vanishing_residuals, jacobian_at_zero_residual, radial_normalization_residual, structure_equation_residual,
    NormalChart, Radial,
};
use foliab::transport::leaf_exp;
use proptest::prelude::*;

const R: f64 = 0.3;

fn case() -> impl Strategy<Value = (usize, Vec<f64>, Vec<f64>)> {
    (0..fixtures().len(), prop::collection::vec(0.0..1.0f64, 3), prop::collection::vec(-0.5..0.5f64, 3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn normal_chart_identities((i, u, s) in case()) {
        let fx = &fixtures()[i];
        let m = &fx.field;
        let (n, n1) = (m.dim, m.spec.n_transverse);
        let center = point_in(&region(fx), &u[..n]);
        let chart = NormalChart::build(m, &center, R, R, 1e-2).unwrap();
        let x: Vec<f64> = s[..n].iter().map(|c| c * chart.r_transverse.min(chart.r_leafwise)).collect();
        let xt: Vec<f64> = x[..n1].iter().copied().chain(std::iter::repeat(0.0).take(n - n1)).collect();

        prop_assert!(jacobian_at_zero_residual(&chart, 1e-4).unwrap() <= 1e-6);

        let gamma_tol = if fx.name == "FIX-HOPF" { 1e-4 } else { 1e-5 };
        let (at_center, along) = gamma_vanishing_residuals(&chart, &[x[..n1].to_vec()]).unwrap();
        prop_assert!(at_center <= gamma_tol && along <= gamma_tol, "{at_center:.3e} {along:.3e}");

        prop_assert!(structure_equation_residual(&chart, &x).unwrap() <= 1e-8);
        prop_assert!(radial_normalization_residual(&chart, Radial::Transverse, &xt).unwrap() <= 1e-8);
        prop_assert!(radial_normalization_residual(&chart, Radial::Leafwise, &x).unwrap() <= 1e-8);

        let y = chart.forward(&x).unwrap();
        let back = chart.inverse(y.as_slice()).unwrap();
        prop_assert!(linalg::max_abs(&linalg::sub(&back, &x)) <= 1e-8);
    }

    #[test]
    fn chart_restricted_to_the_leaf_is_the_leaf_exponential((i, u, s) in case()) {
        let fx = &fixtures()[i];
        let m = &fx.field;
        let (n, n1) = (m.dim, m.spec.n_transverse);
        let center = point_in(&region(fx), &u[..n]);
        let chart = NormalChart::build(m, &center, R, R, 1e-2).unwrap();
        let mut x = vec![0.0; n];
        for a in n1..n {
            x[a] = s[a] * chart.r_leafwise;
        }
        let y = chart.forward(&x).unwrap();
        let w: Vec<f64> = (0..n).map(|r| (n1..n).map(|a| chart.basis[(r, a)] * x[a]).sum()).collect();
        prop_assert!(linalg::max_abs(&w[..n1]) <= 1e-12, "leafwise basis vectors are vertical");
        let leaf = leaf_exp(m, &center, &w[n1..], 1e-2).unwrap();
        prop_assert!(linalg::max_abs(&linalg::sub(y.as_slice(), leaf.as_slice())) <= 1e-6);
    }
}
