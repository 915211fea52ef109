//! Normal foliation chart at one center: vanishing connection symbols,
//! radial identities, frame equations and the chart map itself.

use super::{builtin_name, point_label, Accumulator, SuiteOutput, SuiteResult, Tolerances};
use crate::scenario::Scenario;
use foliab::fixtures::Fixture;
use foliab::geometry::Point;
use foliab::linalg;
use foliab::normal_charts::{
    coordinate_jacobi_check, f_tensor, frame_ode_residual, frame_residuals, gamma_vanishing_residuals, jacobian_at_zero_residual,
    plaque_spread, radial_identity_residual, radial_normalization_residual, structure_equation_residual, FRoute, FrameVariant,
    IdentityForm, NormalChart, Radial, RadialVariant,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub(super) const TOLERANCES: &[(&str, f64, &str)] = &[
    ("gamma_vanishing", 1e-5, "frame connection symbols that vanish at the center and on the transversal"),
    ("radial", 1e-3, "radial Christoffel/curvature identities"),
    ("frame_ode", 1e-3, "second-order radial equations for the frame coefficients"),
    ("structure", 1e-8, "structure equation, radial normalisation, frame consistency"),
    ("inverse", 1e-8, "chart inverse round trip"),
    ("f_routes", 1e-6, "two evaluations of the F tensor"),
    ("finite_difference", 1e-4, "coordinate fields vs. adapted Jacobi fields"),
    ("plaque", 1e-8, "plaques are fibers of the submersion"),
    ("jacobian", 1e-6, "chart differential at the origin"),
    ("warp_frame", 1e-5, "closed-form frame coefficient on the warped product"),
];

/// Sample points stay within this fraction of the chart radii.
const SAMPLE_FRACTION: f64 = 0.8;
const FD_STEP: f64 = 1e-4;

fn form_name(f: IdentityForm) -> &'static str {
    match f {
        IdentityForm::Differential => "differential",
        IdentityForm::Integral => "integral",
    }
}

pub fn run(sc: &Scenario, fx: &Fixture, seed: u64, tol: &Tolerances) -> SuiteResult<SuiteOutput> {
    let m = &fx.field;
    let n = m.dim;
    let n1 = m.spec.n_transverse;
    let region = sc.sampling_region(fx);
    let center = sc.chart.center.clone().unwrap_or_else(|| region.center());
    if center.len() != n {
        return Err(crate::scenario::ScenarioError::Parse { key: "chart.center".into(), message: format!("expected {n} coordinates") }.into());
    }
    let chart = NormalChart::build(m, &Point::new(&center), sc.chart.r_transverse, sc.chart.r_leafwise, sc.chart.step)?;
    let samples = sc.samples.unwrap_or(4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            (0..n)
                .map(|i| {
                    let r = SAMPLE_FRACTION * if i < n1 { chart.r_transverse } else { chart.r_leafwise };
                    rng.gen_range(-r..r)
                })
                .collect()
        })
        .collect();
    let transversal: Vec<Vec<f64>> = points.iter().map(|x| x[..n1].to_vec()).collect();
    let on_transversal = |x: &[f64]| -> Vec<f64> { x[..n1].iter().copied().chain(std::iter::repeat(0.0).take(n - n1)).collect() };
    let oracle = builtin_name(sc, fx);

    let mut acc = Accumulator::default();
    let (at_center, along) = gamma_vanishing_residuals(&chart, &transversal)?;
    acc.record("gamma_vanishing_center", "frame connection symbols vanish at the center", tol.get("gamma_vanishing"), at_center);
    acc.record("gamma_vanishing_transversal", "leafwise frame symbols vanish on the local transversal", tol.get("gamma_vanishing"), along);
    acc.record("jacobian_at_zero", "chart differential at the origin is the chosen basis", tol.get("jacobian"), jacobian_at_zero_residual(&chart, FD_STEP)?);

    let radial_variants: Vec<RadialVariant> =
        RadialVariant::all().into_iter().filter(|v| v.frame || sc.chart.include_chart_basis).collect();
    let mut f_max = 0.0f64;
    for x in &points {
        acc.sample(point_label(x));
        let xt = on_transversal(x);
        for v in &radial_variants {
            let at = if v.radial == Radial::Transverse { &xt } else { x };
            for form in [IdentityForm::Differential, IdentityForm::Integral] {
                if let Some(r) = radial_identity_residual(&chart, *v, at, form)? {
                    acc.record(&format!("radial_{}_{}", v.name(), form_name(form)), "radial identities for connection symbols and curvature", tol.get("radial"), r);
                }
            }
        }
        for v in FrameVariant::all() {
            let at = if v.radial == Radial::Transverse { &xt } else { x };
            for form in [IdentityForm::Differential, IdentityForm::Integral] {
                if let Some(r) = frame_ode_residual(&chart, v, at, form)? {
                    acc.record(&format!("frame_ode_{}_{}", v.name(), form_name(form)), "radial second-order equations for the frame coefficients", tol.get("frame_ode"), r);
                }
            }
        }
        acc.record("structure_equation", "first structure equation with torsion", tol.get("structure"), structure_equation_residual(&chart, x)?);
        acc.record("radial_normalization_transverse", "coframe on the transverse radial field", tol.get("structure"), radial_normalization_residual(&chart, Radial::Transverse, &xt)?);
        acc.record("radial_normalization_leafwise", "coframe on the leafwise radial field", tol.get("structure"), radial_normalization_residual(&chart, Radial::Leafwise, x)?);
        acc.record("frame_consistency", "orthonormal adapted frame and its coefficients", tol.get("structure"), frame_residuals(&chart, x)?);

        let y = chart.forward(x)?;
        let back = chart.inverse(y.as_slice())?;
        acc.record("inverse_round_trip", "chart map inverse", tol.get("inverse"), linalg::max_abs(&linalg::sub(&back, x)));

        let fa = f_tensor(&chart, x, FRoute::ChartDerivative)?;
        let fb = f_tensor(&chart, x, FRoute::AmbientCovariant)?;
        f_max = f_max.max(linalg::max_abs(&fa));
        acc.record("f_tensor_routes", "F tensor from chart derivatives vs. ambient covariant derivatives", tol.get("f_routes"), linalg::max_abs(&linalg::sub(&fa, &fb)));

        for i in 0..n1 {
            let r = coordinate_jacobi_check(&chart, x, i, FD_STEP, 10)?;
            acc.record("coordinate_fields_are_jacobi", "transverse coordinate fields are adapted Jacobi fields", tol.get("finite_difference"), r);
        }

        if let Some(sub) = &fx.submersion {
            let leaf = x[n1..].to_vec();
            let offsets = vec![leaf.clone(), leaf.iter().map(|v| -v).collect(), leaf.iter().map(|v| 0.5 * v).collect()];
            acc.record("plaques_are_fibers", "plaques lie in fibers of the submersion", tol.get("plaque"), plaque_spread(&chart, sub, &x[..n1], &offsets)?);
        }

        if oracle == Some("FIX-WARP") {
            let af = chart.ambient_frame_coefficients(&xt)?;
            let yt = chart.forward(&xt)?;
            let expected = yt.as_slice()[0].exp();
            acc.record("warp_leafwise_frame_coefficient", "frame coefficient e^{x'} on the warped product", tol.get("warp_frame"), (af[(1, 1)] - expected).abs());
        }
    }

    Ok(SuiteOutput {
        fixture: fx.name.clone(),
        checks: acc.rows(),
        details: json!({
            "chart": {
                "center": center,
                "r_transverse": chart.r_transverse,
                "r_leafwise": chart.r_leafwise,
                "step": chart.step,
            },
            "samples": samples,
            "f_tensor_max_abs": f_max,
            "chart_basis_variants_reported": sc.chart.include_chart_basis,
        }),
        tables: vec![acc.table("points")],
    })
}
