mod common;

use common::{draw, gnorm, parts, resolve};
use foliab::connections::{
    adapted_derivative, adapted_torsion, adapted_torsion_direct, bracket, curvature, levi_civita_derivative, oneill_a,
    oneill_a_from_extension, oneill_t, oneill_t_from_extension, ConnectionKind, JetGeometry, VectorField,
};
use foliab::geometry::{Point, TangentVector};
use foliab::jet::{Jet, Scalar};
use foliab::linalg;
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0))
}

fn extension(p: &Point, v: &[f64], rng: &mut ChaCha8Rng) -> VectorField {
    VectorField::affine(p.as_slice(), v, &random_matrix(rng, v.len()))
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn oneill_tensors_ignore_the_extension(d in draw(), seed in any::<u64>()) {
        let (fx, p, vs) = resolve(&d);
        let m = &fx.field;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = TangentVector::new(&p, &vs[0]);
        let f = TangentVector::new(&p, &vs[1]);
        let t = oneill_t(m, &p, &e, &f).unwrap();
        let a = oneill_a(m, &p, &e, &f).unwrap();
        let scale = gnorm(fx, &p, &vs[0]).max(1.0) * gnorm(fx, &p, &vs[1]).max(1.0);
        for _ in 0..2 {
            let ext = extension(&p, &vs[1], &mut rng);
            let te = oneill_t_from_extension(m, &p, &e, &ext).unwrap();
            let ae = oneill_a_from_extension(m, &p, &e, &ext).unwrap();
            prop_assert!(gnorm(fx, &p, &linalg::sub(te.as_slice(), t.as_slice())) <= 1e-8 * scale);
            prop_assert!(gnorm(fx, &p, &linalg::sub(ae.as_slice(), a.as_slice())) <= 1e-8 * scale);
        }
    }

    #[test]
    fn connection_difference_is_t_plus_a(d in draw(), seed in any::<u64>()) {
        let (fx, p, vs) = resolve(&d);
        let m = &fx.field;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = TangentVector::new(&p, &vs[0]);
        let ext = extension(&p, &vs[1], &mut rng);
        let f = TangentVector::new(&p, &vs[1]);
        let lc = levi_civita_derivative(m, &p, &e, &ext).unwrap();
        let ad = adapted_derivative(m, &p, &e, &ext).unwrap();
        // The tensors are stored so that T_E uses V E and A_E uses H E.
        let rhs = add(oneill_t(m, &p, &e, &f).unwrap().as_slice(), oneill_a(m, &p, &e, &f).unwrap().as_slice());
        let lhs = linalg::sub(lc.as_slice(), ad.as_slice());
        let scale = gnorm(fx, &p, &vs[0]).max(1.0) * gnorm(fx, &p, &vs[1]).max(1.0);
        prop_assert!(gnorm(fx, &p, &linalg::sub(&lhs, &rhs)) <= 1e-8 * scale);
    }

    #[test]
    fn torsion_case_formulas_match_the_definition(d in draw(), seed in any::<u64>()) {
        let (fx, p, vs) = resolve(&d);
        let m = &fx.field;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ev, eh) = parts(fx, &p, &vs[0]);
        let (fv, fh) = parts(fx, &p, &vs[1]);
        let scale = gnorm(fx, &p, &vs[0]).max(1.0) * gnorm(fx, &p, &vs[1]).max(1.0);
        for (e, f) in [(&ev, &fv), (&eh, &fh), (&eh, &fv), (&ev, &fh), (&vs[0], &vs[1])] {
            let formula = adapted_torsion(m, &p, &TangentVector::new(&p, e), &TangentVector::new(&p, f)).unwrap();
            let direct = adapted_torsion_direct(m, &p, &extension(&p, e, &mut rng), &extension(&p, f, &mut rng)).unwrap();
            prop_assert!(gnorm(fx, &p, &linalg::sub(formula.as_slice(), direct.as_slice())) <= 1e-8 * scale);
        }
        // vertical pairs are torsion free
        let vv = adapted_torsion(m, &p, &TangentVector::new(&p, &ev), &TangentVector::new(&p, &fv)).unwrap();
        prop_assert!(gnorm(fx, &p, vv.as_slice()) <= 1e-10 * scale);
    }

    #[test]
    fn vertical_bracket_of_horizontal_fields_is_twice_a(d in draw()) {
        let (fx, p, vs) = resolve(&d);
        let m = &fx.field;
        let n = m.dim;
        let (_, x) = parts(fx, &p, &vs[0]);
        let (_, y) = parts(fx, &p, &vs[1]);
        let jg = JetGeometry::at(m, p.as_slice(), 1).unwrap();
        let h = jg.local.hproj();
        let seed = Jet::seed(p.as_slice(), 1);
        let lift = |v: &[f64]| -> Vec<Jet> { v.iter().map(|&c| seed[0].lift(c)).collect() };
        let xt = linalg::matvec(&h, &lift(&x), n);
        let yt = linalg::matvec(&h, &lift(&y), n);
        let br = bracket(n, &xt, &yt);
        let (vbr, _) = parts(fx, &p, &br);
        let a = oneill_a(m, &p, &TangentVector::new(&p, &x), &TangentVector::new(&p, &y)).unwrap();
        let twice: Vec<f64> = a.as_slice().iter().map(|c| 2.0 * c).collect();
        let scale = gnorm(fx, &p, &x).max(1.0) * gnorm(fx, &p, &y).max(1.0);
        prop_assert!(gnorm(fx, &p, &linalg::sub(&vbr, &twice)) <= 1e-8 * scale);
    }

    #[test]
    fn adapted_curvature_preserves_the_splitting(d in draw()) {
        let (fx, p, vs) = resolve(&d);
        let m = &fx.field;
        let (gv, gh) = parts(fx, &p, &vs[2]);
        let e = TangentVector::new(&p, &vs[0]);
        let f = TangentVector::new(&p, &vs[1]);
        let scale = gnorm(fx, &p, &vs[0]).max(1.0) * gnorm(fx, &p, &vs[1]).max(1.0) * gnorm(fx, &p, &vs[2]).max(1.0);
        let rv = curvature(m, &p, ConnectionKind::Adapted, &e, &f, &TangentVector::new(&p, &gv)).unwrap();
        let rh = curvature(m, &p, ConnectionKind::Adapted, &e, &f, &TangentVector::new(&p, &gh)).unwrap();
        let (_, rv_h) = parts(fx, &p, rv.as_slice());
        let (rh_v, _) = parts(fx, &p, rh.as_slice());
        prop_assert!(gnorm(fx, &p, &rv_h) <= 1e-8 * scale);
        prop_assert!(gnorm(fx, &p, &rh_v) <= 1e-8 * scale);
    }
}
