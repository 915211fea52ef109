//! O'Neill tensors, adapted torsion and the curvature-difference identities
//! at random points, plus closed-form oracles for the built-in fixtures.

use super::{builtin_name, point_label, random_point, random_vector, split, unit, Accumulator, SuiteOutput, SuiteResult, Tolerances};
use crate::scenario::Scenario;
use foliab::connections::{
    self, adapted_torsion, adapted_torsion_direct, breve_derivative, connection_values, curvature_difference_check, local_values,
    oneill_a, oneill_a_from_extension, oneill_t, oneill_t_from_extension, sectional_curvature, ConnectionKind, CurvatureCase,
    JetGeometry, VectorField,
};
use foliab::fixtures::Fixture;
use foliab::geometry::{Point, TangentVector};
use foliab::linalg;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub(super) const TOLERANCES: &[(&str, f64, &str)] = &[
    ("extension", 1e-8, "tensor value vs. literal formula on a field extension"),
    ("torsion", 1e-8, "adapted torsion case formulas vs. definition"),
    ("curvature_difference", 1e-5, "curvature-difference identities"),
    ("oneill_oracle", 1e-6, "closed-form O'Neill tensor values"),
    ("vanishing", 1e-8, "tensors that vanish identically"),
    ("hopf_a_norm", 1e-4, "|A_X Y| against the horizontal curvature formula"),
    ("flat", 1e-10, "everything vanishes on the flat product"),
];

/// Curvature of the round base of the Hopf fibration (radius 1/2).
const HOPF_BASE_CURVATURE: f64 = 4.0;

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, n, &random_vector(rng, n * n))
}

pub fn run(sc: &Scenario, fx: &Fixture, seed: u64, tol: &Tolerances) -> SuiteResult<SuiteOutput> {
    let m = &fx.field;
    let n = m.dim;
    let samples = sc.samples.unwrap_or(50);
    let region = sc.sampling_region(fx);
    let oracle = builtin_name(sc, fx);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Accumulator::default();

    for _ in 0..samples {
        let x = random_point(&mut rng, &region);
        let p = Point::new(&x);
        acc.sample(point_label(&x));
        let g = m.values(&x);

        // Extension independence of T and A.
        let e = random_vector(&mut rng, n);
        let f = random_vector(&mut rng, n);
        let ef = VectorField::affine(&x, &e, &random_matrix(&mut rng, n));
        let ff = VectorField::affine(&x, &f, &random_matrix(&mut rng, n));
        let (et, ft) = (TangentVector::new(&p, &e), TangentVector::new(&p, &f));
        let d = linalg::sub(oneill_t_from_extension(m, &p, &et, &ff)?.as_slice(), oneill_t(m, &p, &et, &ft)?.as_slice());
        acc.record("oneill_t_extension", "O'Neill T from its defining formula on an extension", tol.get("extension"), linalg::max_abs(&d));
        let d = linalg::sub(oneill_a_from_extension(m, &p, &et, &ff)?.as_slice(), oneill_a(m, &p, &et, &ft)?.as_slice());
        acc.record("oneill_a_extension", "O'Neill A from its defining formula on an extension", tol.get("extension"), linalg::max_abs(&d));

        // Torsion of the adapted connection: case formulas vs. definition.
        let d = linalg::sub(adapted_torsion(m, &p, &et, &ft)?.as_slice(), adapted_torsion_direct(m, &p, &ef, &ff)?.as_slice());
        acc.record("adapted_torsion_cases", "adapted torsion in terms of T and A", tol.get("torsion"), linalg::max_abs(&d));

        // The symmetrised connection is torsion free.
        let a = breve_derivative(m, &p, &et, &ff)?;
        let b = breve_derivative(m, &p, &ft, &ef)?;
        let br = connections::bracket(n, &ef.jets(&x, 1), &ff.jets(&x, 1));
        let d: Vec<f64> = (0..n).map(|i| a.as_slice()[i] - b.as_slice()[i] - br[i]).collect();
        acc.record("symmetrised_torsion_free", "torsion-free symmetrisation of the adapted connection", tol.get("torsion"), linalg::max_abs(&d));

        for (case, name) in [
            (CurvatureCase::VV, "curvature_difference_vertical"),
            (CurvatureCase::XY, "curvature_difference_horizontal"),
            (CurvatureCase::XV, "curvature_difference_mixed"),
        ] {
            let r = curvature_difference_check(m, &p, case, &mut rng, 4)?;
            acc.record(name, "adapted minus Levi-Civita curvature", tol.get("curvature_difference"), r);
        }

        match oracle {
            Some("FIX-WARP") => {
                let (ver, _) = split(m, &x, &random_vector(&mut rng, n))?;
                let v = TangentVector::new(&p, &unit(&g, &ver));
                let t = oneill_t(m, &p, &v, &v)?;
                let d = linalg::sub(t.as_slice(), &[-1.0, 0.0]);
                acc.record("warp_t_unit_vertical", "T_V V = −∂_x for unit vertical V", tol.get("oneill_oracle"), linalg::max_abs(&d));
                let a = oneill_a(m, &p, &et, &ft)?;
                acc.record("warp_a_vanishes", "integrable normal bundle: A = 0", tol.get("vanishing"), linalg::gnorm(&g, a.as_slice()));
            }
            Some("FIX-HOPF") => {
                let t = oneill_t(m, &p, &et, &ft)?;
                acc.record("hopf_t_vanishes", "totally geodesic fibers: T = 0", tol.get("oneill_oracle"), linalg::gnorm(&g, t.as_slice()));
                let (_, h1) = split(m, &x, &random_vector(&mut rng, n))?;
                let (_, h2) = split(m, &x, &random_vector(&mut rng, n))?;
                let u = unit(&g, &h1);
                let w = linalg::axpy(-linalg::inner(&g, &h2, &u), &u, &h2);
                let w = unit(&g, &w);
                let (ut, wt) = (TangentVector::new(&p, &u), TangentVector::new(&p, &w));
                let a_norm = linalg::gnorm(&g, oneill_a(m, &p, &ut, &wt)?.as_slice());
                let k_total = sectional_curvature(m, &p, ConnectionKind::LeviCivita, &u, &w)?;
                let expected = ((HOPF_BASE_CURVATURE - k_total) / 3.0).sqrt();
                acc.record("hopf_a_unit", "horizontal curvature formula K_base = K + 3|A_X Y|²", tol.get("hopf_a_norm"), (a_norm - expected).abs());
                acc.record("hopf_a_norm_is_one", "|A_X Y| = 1 on the round Hopf fibration", tol.get("hopf_a_norm"), (a_norm - 1.0).abs());
            }
            Some("FIX-PRODUCT") => {
                let lg = local_values(m, &x)?;
                let jg = JetGeometry::at(m, &x, 2)?;
                let mut worst = linalg::max_abs(&lg.christoffel);
                worst = worst.max(linalg::max_abs(&lg.oneill_t())).max(linalg::max_abs(&lg.oneill_a()));
                worst = worst.max(linalg::max_abs(&lg.adapted_torsion()));
                worst = worst.max(linalg::max_abs(&connection_values(m, &x, ConnectionKind::Adapted)?));
                worst = worst.max(linalg::max_abs(&linalg::values(&jg.curvature(ConnectionKind::LeviCivita))));
                worst = worst.max(linalg::max_abs(&linalg::values(&jg.curvature(ConnectionKind::Adapted))));
                acc.record("product_everything_vanishes", "flat product: all connection data vanish", tol.get("flat"), worst);
            }
            _ => {}
        }
    }

    Ok(SuiteOutput {
        fixture: fx.name.clone(),
        checks: acc.rows(),
        details: json!({ "samples": samples, "region": region }),
        tables: vec![acc.table("samples")],
    })
}
