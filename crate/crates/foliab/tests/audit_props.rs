mod common;

use common::fixture;
use foliab::audit::{build_cover, leafwise_injectivity_floor, partition_of_unity, run_audit, AuditConfig, Cover, CoverConfig};
use foliab::geometry::Domain;
use proptest::prelude::*;
use std::sync::OnceLock;

fn square() -> Domain {
    Domain::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap()
}

fn cover() -> &'static Cover {
    static COVER: OnceLock<Cover> = OnceLock::new();
    COVER.get_or_init(|| {
        let cfg = CoverConfig { test_lattice: 40, ..CoverConfig::default() };
        build_cover(&fixture("FIX-PRODUCT").field, &square(), 0.5, &cfg).unwrap()
    })
}

#[test]
fn audit_is_deterministic() {
    let cfg = AuditConfig { region: Some(square()), lattice: vec![5], exhaustion: vec![0.5, 1.0], ..AuditConfig::default() };
    let fx = fixture("FIX-WARP");
    let a = serde_json::to_string(&run_audit(fx, &cfg, false).unwrap()).unwrap();
    let b = serde_json::to_string(&run_audit(fx, &cfg, false).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn cover_covers_the_region() {
    let c = cover();
    assert_eq!(c.coverage, 1.0, "uncovered at {:?}", c.uncovered_witness);
    assert!(c.multiplicity as f64 <= c.volume_ratio);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn leaf_injectivity_floor_is_monotone_in_the_horizon(c1 in 0.5..4.0f64, c2 in 0.5..4.0f64) {
        let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
        let fx = fixture("FIX-HOPF");
        let cfg = |cap: f64| AuditConfig { injectivity_cap: cap, injectivity_points: vec![vec![1.2, 0.3, -0.4]], ..AuditConfig::default() };
        let a = leafwise_injectivity_floor(fx, &cfg(lo)).unwrap();
        let b = leafwise_injectivity_floor(fx, &cfg(hi)).unwrap();
        prop_assert!(a[0].floor <= lo + 1e-12);
        prop_assert!(a[0].floor <= b[0].floor + 1e-2, "{} at cap {lo} vs {} at cap {hi}", a[0].floor, b[0].floor);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn partition_of_unity_is_normalized_and_supported(x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let c = cover();
        let pu = partition_of_unity(c);
        let q = [x, y];
        let w = pu.weights(&q).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        let mut inside = 0;
        for (wi, t) in w.iter().zip(&c.charts) {
            if t.contains(&q, 2.0 * c.r_transverse, 2.0 * c.r_leafwise) {
                inside += 1;
            } else {
                prop_assert_eq!(*wi, 0.0);
            }
            prop_assert!(*wi >= 0.0);
        }
        prop_assert!(inside <= c.multiplicity);
    }
}
